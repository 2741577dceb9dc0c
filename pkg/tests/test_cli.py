import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gradphi.cli import ConfigError, Table, parse_config, run


def cfg_file(tmp_path, text):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_parse_config_comments_and_lists():
    cfg = parse_config("# header\nL = 8   # side\nx = 1, 2,3\nrho = 1e-3,1\ntwo_variable = yes\n", "neumann")
    assert cfg.L == 8 and cfg.x == [1, 2, 3] and cfg.rho == [1e-3, 1.0] and cfg.two_variable
    assert cfg.line_of("x") == "line 3" and cfg.line_of("d") == "default"


@pytest.mark.parametrize("text,match", [
    ("L = 8\nfoo = 1\n", "line 2: unknown key 'foo'"),
    ("L = eight\n", "line 1: bad value"),
    ("L = 8\nnonsense\n", "line 2: expected"),
    ("d = 2\n\nalpha = 2.5\n", "line 3: alpha"),
    ("potential = dipole\na = 1.2\n", "line 2: a"),
    ("L = 8\nx = 7\n", "line 2: x"),
    ("chains = 1\n", "line 1: chains"),
])
def test_parse_config_errors_name_the_line(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, "sample")


def test_table_format(tmp_path):
    t = Table(["n[count]", "v[1]", "ok[bool]"])
    t.add(3, 0.1, True)
    out = tmp_path / "t.csv"
    t.write(str(out))
    raw = out.read_bytes()
    assert b"\r\n" not in raw
    header, rows = read_csv(out)
    assert header == ["n[count]", "v[1]", "ok[bool]"]
    assert rows == [["3", "0.10000000000000001", "1"]]
    assert float(rows[0][1]) == 0.1


def test_green(tmp_path):
    out = str(tmp_path / "g.csv")
    assert run(["green", "--config", cfg_file(tmp_path, "d = 1\nL = 8\nrho = 0.5\n"), "--out", out]) == 0
    header, rows = read_csv(out)
    assert header[:2] == ["y0[sites]", "radius[sites]"] and len(rows) == 8
    G = np.array([float(r[3]) for r in rows])
    assert G.sum() == pytest.approx(1 / 0.5)
    prov = json.load(open(out + ".provenance.json"))
    assert prov["command"] == "green" and prov["config"]["L"] == 8 and prov["config_lines"]["rho"] == 3
    assert {"numpy", "scipy", "python"} <= set(prov["versions"])


def test_czo_norm(tmp_path):
    out = str(tmp_path / "c.csv")
    text = "L = 8\nrho = 1\nalpha = 0\nmethod = lanczos\n"
    assert run(["czo-norm", "--config", cfg_file(tmp_path, text), "--out", out]) == 0
    header, rows = read_csv(out)
    assert float(rows[0][header.index("norm[1]")]) == pytest.approx(8 / 9, rel=1e-8)


def test_neumann_and_strict(tmp_path):
    out = str(tmp_path / "n.csv")
    text = "L = 4\npotential = dipole\na = 0.25\nrho_s = 0,1\ntwo_variable = true\nn_configs = 2\n"
    assert run(["neumann", "--config", cfg_file(tmp_path, text), "--out", out, "--seed", "3"]) == 0
    header, rows = read_csv(out)
    assert len(rows) == 8
    for r in rows:
        assert float(r[header.index("ratio[1]")]) <= 1.05 * float(r[header.index("ratio_bound[1]")])
        assert r[header.index("converged[bool]")] == "1"
    text += "max_iter = 2\n"
    args = ["neumann", "--config", cfg_file(tmp_path, text), "--out", out, "--seed", "3"]
    assert run(args) == 0
    assert run(args + ["--strict"]) == 2


def test_sample(tmp_path):
    out = str(tmp_path / "s.csv")
    text = "L = 8\nc = 1\nm = 0.5\nx = 1,2\nsteps = 1000\nseed = 4\n"
    assert run(["sample", "--config", cfg_file(tmp_path, text), "--out", out]) == 0
    header, rows = read_csv(out)
    assert [int(r[0]) for r in rows] == [1, 2]
    assert json.load(open(out + ".provenance.json"))["seed"] == 4


def test_verify_all(tmp_path):
    out = str(tmp_path / "v.csv")
    text = "L = 8\nm = 0.5\nx = 1,2\nsteps = 2000\n"
    assert run(["verify-all", "--config", cfg_file(tmp_path, text), "--out", out, "--seed", "1"]) == 0
    header, rows = read_csv(out)
    names = [r[0] for r in rows]
    assert "helffer_sjostrand" in names and "var_X_1_0" in names
    assert all(r[-1] == "1" for r in rows)


def test_cumulants(tmp_path):
    out = str(tmp_path / "k.csv")
    text = "L = 16\nm = 0.3\nmu = 0.3\nx = 2,4\nsteps = 800\nmax_steps = 800\nscales = 1,2\n"
    code = run(["cumulants", "--config", cfg_file(tmp_path, text), "--out", out, "--seed", "2"])
    prov = json.load(open(out + ".provenance.json"))
    assert code == (2 if prov["info"].get("failed_checks") else 0)
    assert set(prov["info"]["checks"]) >= {"variance_log_growth", "joint_bound"}


def test_exit_codes_for_bad_input(tmp_path, capsys):
    out = str(tmp_path / "o.csv")
    assert run(["sample", "--out", out]) == 1
    assert "needs a seed" in capsys.readouterr().err
    assert run(["green", "--config", cfg_file(tmp_path, "L = 8\nbogus = 1\n"), "--out", out]) == 1
    assert "line 2: unknown key 'bogus'" in capsys.readouterr().err
    assert run(["green", "--config", str(tmp_path / "missing.cfg"), "--out", out]) == 1
    assert run(["sample", "--out", out, "--seed", "-1"]) == 1
    big = "d = 1\nL = 2048\nrho = 1\n"
    assert run(["neumann", "--config", cfg_file(tmp_path, big + "two_variable = 1\nm = 0.1\n"),
                "--out", out, "--seed", "0"]) == 1


def test_console_entry_point(tmp_path):
    out = str(tmp_path / "g.csv")
    cfg = cfg_file(tmp_path, "d = 1\nL = 4\nrho = 1\n")
    res = subprocess.run([sys.executable, "-m", "gradphi", "green", "--config", cfg, "--out", out],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
