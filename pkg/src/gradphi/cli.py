"""Command-line driver: ``gradphi <command> --config FILE --out FILE.csv``.

Configs are ``key = value`` lines with ``#`` comments.  List values are
comma-separated.  Every run writes a CSV plus ``<out>.provenance.json``.

Exit codes: 0 success, 1 parse or precondition failure, 2 numerical failure.
Non-convergence is reported in the CSV and is fatal only with ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy
import scipy.fft as sfft

from . import __version__
from .errors import CertificationError, ConvergenceError, ResourceError, SamplingError, ShapeError
from .errors import DomainError, UnsupportedDimensionError
from .torus import TorusLattice, Weight

COMMANDS = ("green", "czo-norm", "neumann", "sample", "cumulants", "verify-all")
STOCHASTIC = {"neumann", "sample", "cumulants", "verify-all"}


class ConfigError(Exception):
    """A config file that cannot be parsed or fails validation."""


def _floats(s):
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s):
    return [int(v) for v in s.split(",") if v.strip()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# key -> (parser, default)
KEYS = {
    "d": (int, 2),
    "L": (int, 16),
    "potential": (str, "quadratic"),
    "c": (float, 1.0),
    "a": (float, 0.25),
    "m": (float, 0.1),
    "mu": (float, 0.0),
    "x": (_ints, [4]),
    "rho": (_floats, [1e-4]),
    "rho_s": (_floats, [0.0]),
    "tol": (float, 1e-10),
    "max_iter": (int, 500),
    "two_variable": (_bool, False),
    "n_configs": (int, 1),
    "chains": (int, 4),
    "steps": (int, 2000),
    "burn_in": (int, -1),
    "thin": (int, 1),
    "max_steps": (int, 16000),
    "scales": (_ints, [1, 2, 4]),
    "alpha": (_floats, [0.0]),
    "beta": (float, -0.75),
    "iters": (int, 20000),
    "method": (str, "power"),
    "checkpoint": (str, ""),
    "seed": (int, None),
}


@dataclass
class ExperimentConfig:
    command: str
    values: dict
    lines: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def line_of(self, key) -> str:
        n = self.lines.get(key)
        return f"line {n}" if n is not None else "default"


def parse_config(text: str, command: str) -> ExperimentConfig:
    values = {k: default for k, (_, default) in KEYS.items()}
    lines = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        try:
            values[key] = KEYS[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"line {n}: bad value for {key!r}: {exc}") from None
        lines[key] = n
    cfg = ExperimentConfig(command, values, lines)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    """Re-check module preconditions and name the responsible config line."""
    def fail(key, msg):
        raise ConfigError(f"{cfg.line_of(key)}: {key}: {msg}")

    try:
        TorusLattice(cfg.d, cfg.L)
    except DomainError as exc:
        fail("L" if "side" in str(exc) else "d", str(exc))
    if cfg.potential not in ("quadratic", "dipole"):
        fail("potential", "must be 'quadratic' or 'dipole'")
    if cfg.potential == "quadratic" and not cfg.c > 0:
        fail("c", "quadratic stiffness must be positive")
    if cfg.potential == "dipole" and not 0 <= cfg.a < 1:
        fail("a", "dipole activity must lie in [0, 1)")
    if cfg.command in ("sample", "cumulants", "verify-all", "neumann"):
        if cfg.command != "neumann" and not cfg.m > 0:
            fail("m", "mass must be positive")
    if any(r <= 0 for r in cfg.rho):
        fail("rho", "every rho must be positive")
    if any(r < 0 for r in cfg.rho_s):
        fail("rho_s", "spectral parameters must be nonnegative")
    if cfg.command == "neumann" and any(r + cfg.m**2 <= 0 for r in cfg.rho_s):
        fail("m", "rho_s + m^2 must be positive")
    if any(abs(a) >= cfg.d for a in cfg.alpha):
        fail("alpha", f"|alpha| must be < d={cfg.d}")
    if not cfg.tol > 0:
        fail("tol", "must be positive")
    if cfg.chains < 2:
        fail("chains", "at least two chains are required")
    if cfg.steps < 1 or cfg.thin < 1:
        fail("steps", "steps and thin must be positive")
    if cfg.burn_in >= cfg.steps:
        fail("burn_in", "must be smaller than steps")
    if cfg.method not in ("power", "lanczos"):
        fail("method", "must be 'power' or 'lanczos'")
    if any(s < 1 for s in cfg.scales):
        fail("scales", "block sizes must be positive")
    if cfg.command in ("sample", "cumulants") and any(r <= 0 or r >= cfg.L // 2 + 1 for r in cfg.x):
        fail("x", "displacements must lie in 1..L/2")
    if cfg.mu != 0 and cfg.command == "sample" and len(cfg.x) != 1:
        fail("x", "a tilted run takes exactly one tilt displacement")


def _potential(cfg):
    from .potential import make_dipole, make_quadratic
    return make_quadratic(cfg.c, cfg.d) if cfg.potential == "quadratic" else make_dipole(cfg.a, cfg.d)


def _burn(cfg):
    return None if cfg.burn_in < 0 else cfg.burn_in


class Table:
    """CSV writer: header with units, ``%.17g`` floats, ``\\n`` line endings."""

    def __init__(self, columns):
        self.columns = columns
        self.rows = []

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match header")
        self.rows.append(values)

    @staticmethod
    def _fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return "%.17g" % float(v)
        return str(v)

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows([self._fmt(v) for v in r] for r in self.rows)


# --- commands ---------------------------------------------------------------------

def cmd_green(cfg, seed, info):
    from .greens import green_derivatives, verify_decay
    lat = TorusLattice(cfg.d, cfg.L)
    t = Table([f"y{i}[sites]" for i in range(cfg.d)] + ["radius[sites]", "rho[1]", "G[1]", "grad_G_norm[1]"])
    coords = lat.coords.reshape(cfg.d, -1).T
    for rho in cfg.rho:
        G, g1, _, _ = green_derivatives(lat, rho)
        gn = np.sqrt((g1**2).sum(axis=0)).reshape(-1)
        for k, (y, r) in enumerate(zip(coords, lat.radius.reshape(-1))):
            t.add(*[int(c) for c in y], float(r), rho, float(G.reshape(-1)[k]), float(gn[k]))
        if cfg.d == 2 and cfg.L <= 512:
            rep = verify_decay(rho, cfg.L, cfg.d)
            info.setdefault("decay", []).append(rep.__dict__)
    return t, []


def cmd_czo(cfg, seed, info):
    from .greens import estimate_weighted_norm, make_T
    lat = TorusLattice(cfg.d, cfg.L)
    t = Table(["alpha[1]", "rho[1]", "L[sites]", "norm[1]", "multiplier_norm[1]", "converged[bool]",
               "iterations[count]", "method"])
    problems = []
    for rho in cfg.rho:
        T = make_T(lat, rho)
        mn = T.multiplier_norm()
        for a in cfg.alpha:
            est = estimate_weighted_norm(T, Weight(cfg.d, a), iters=cfg.iters, seed=seed or 0, method=cfg.method)
            t.add(a, rho, cfg.L, est.value, mn, est.converged, est.iterations, cfg.method)
            if not est.converged:
                problems.append(f"norm estimate at alpha={a}, rho={rho} did not converge")
    return t, problems


def _last(seq):
    return seq[-1] if len(seq) else float("nan")


def cmd_neumann(cfg, seed, info):
    from .quenched import QuenchedProblem, random_configuration, solve_one_variable, solve_two_variable
    lat = TorusLattice(cfg.d, cfg.L)
    V = _potential(cfg)
    rng = np.random.default_rng(seed)
    t = Table(["config[index]", "rho_s[1]", "variant", "ratio[1]", "ratio_bound[1]", "iterations[count]",
               "converged[bool]", "residual[1]", "flags"])
    problems = []
    for k in range(cfg.n_configs):
        phi = random_configuration(lat, 1.0, int(rng.integers(2**63)))
        h = rng.standard_normal((cfg.d,) + lat.shape)
        F = rng.standard_normal((cfg.d,) + lat.shape * 2) if cfg.two_variable else None
        for rs in cfg.rho_s:
            rep = solve_one_variable(QuenchedProblem(lat, V, phi, rs, cfg.m, h), cfg.tol, cfg.max_iter)
            t.add(k, rs, "one", rep.ratio, 1 - V.ratio, rep.iterations, rep.converged, _last(rep.iterates),
                  ";".join(rep.flags))
            if not rep.converged:
                problems.append(f"one-variable solve (config {k}, rho_s={rs}) did not converge")
            if F is not None:
                rep = solve_two_variable(QuenchedProblem(lat, V, phi, rs, cfg.m, F), cfg.tol, cfg.max_iter)
                t.add(k, rs, "two", rep.ratio, 2 * (1 - V.ratio), rep.iterations, rep.converged,
                      _last(rep.iterates), ";".join(rep.flags))
                if not rep.converged:
                    problems.append(f"two-variable solve (config {k}, rho_s={rs}) did not converge")
    return t, problems


def cmd_sample(cfg, seed, info):
    from .sampler import ModelSpec, diagnose, sample
    from .stats import kstats_jackknife
    lat = TorusLattice(cfg.d, cfg.L)
    sites = [lat.axis_site(r) for r in cfg.x]
    spec = ModelSpec(lat, _potential(cfg), cfg.m, cfg.mu, sites[0] if cfg.mu != 0 else None)
    e = sample(spec, cfg.chains, cfg.steps, seed, burn_in=_burn(cfg), thin=cfg.thin, displacements=sites,
               checkpoint=cfg.checkpoint or None, checkpoint_at=cfg.steps if cfg.checkpoint else None)
    diag = diagnose(e)
    info["acceptance"] = e.acceptance.tolist()
    info["step_size"] = e.step_size.tolist()
    t = Table(["x[sites]", "mu[1]", "mean_X[1]", "mean_X_se[1]", "var_X[1]", "var_X_se[1]", "k3_X[1]",
               "k3_X_se[1]", "rhat[1]", "ess[count]"])
    for r, s in zip(cfg.x, sites):
        k, se = kstats_jackknife(e.X(s))
        name = f"X{tuple(s)}"
        t.add(r, cfg.mu, k[0], se[0], k[1], se[1], k[2], se[2], diag.rhat[name], diag.ess[name])
    problems = [] if diag.converged else [f"R-hat above threshold for {diag.flagged}"]
    return t, problems


def cmd_cumulants(cfg, seed, info):
    from .cumulants import SweepSpec, theorem_sweep
    lat = TorusLattice(cfg.d, cfg.L)
    burn = _burn(cfg) if _burn(cfg) is not None else cfg.steps // 5
    sw = SweepSpec(lat, _potential(cfg), cfg.m, cfg.mu, tuple(cfg.x), cfg.chains, cfg.steps, burn,
                   cfg.thin, cfg.max_steps, seed, tuple(cfg.scales))
    rep = theorem_sweep(sw)
    info["checks"] = rep.checks
    info["details"] = json.loads(json.dumps(rep.details, default=float))
    t = Table(["x[sites]", "g2_mu0[1]", "g2_mu0_se[1]", "m3_mu0[1]", "m3_mu0_se[1]", "mu[1]", "g3_mu[1]",
               "g3_mu_se[1]", "steps[count]"])
    for row in rep.rows:
        t.add(row.x, row.g2_0, row.g2_0_se, row.m3_0, row.m3_0_se, cfg.mu, row.g3_mu, row.g3_mu_se,
              row.steps_used)
    problems = [f"check {k} is {v}" for k, v in rep.checks.items() if v == "inconclusive"]
    failed = [k for k, v in rep.checks.items() if v == "fail"]
    if failed:
        info["failed_checks"] = failed
    return t, problems


def cmd_verify_all(cfg, seed, info):
    """Gaussian identities that hold exactly for the quadratic potential."""
    from .greens import make_T, periodic_green, resolvent_apply
    from .quenched import QuenchedProblem, gaussian_hs_check, random_configuration, solve_one_variable
    from .sampler import ModelSpec, gaussian_log_moment, sample
    from .stats import kstats_jackknife
    from .potential import make_quadratic
    d, L, m = cfg.d, min(cfg.L, 32), cfg.m
    c = cfg.c if cfg.potential == "quadratic" else 1.0
    lat = TorusLattice(d, L)
    rng = np.random.default_rng(seed)
    t = Table(["check", "value[1]", "reference[1]", "se[1]", "tolerance[1]", "passed[bool]"])

    rho = m**2
    G = periodic_green(lat, rho)
    t.add("green_zero_mode", float(G.sum()), 1 / rho, 0.0, 1e-8 / rho, abs(G.sum() - 1 / rho) <= 1e-8 / rho)
    lap = resolvent_apply(lat.delta(), lat.shape, 1.0, rho)
    t.add("green_vs_resolvent", float(np.abs(lap - G).max()), 0.0, 0.0, 1e-12, float(np.abs(lap - G).max()) <= 1e-12)
    T = make_T(lat, 1.0)
    exact = 4.0 * d / (4.0 * d + 1.0)
    t.add("T_multiplier_norm", T.multiplier_norm(), exact, 0.0, 1e-12, abs(T.multiplier_norm() - exact) <= 1e-12)
    f = lat.delta() - lat.delta(lat.axis_site(2))
    g = lat.delta(lat.axis_site(1)) - lat.delta(lat.axis_site(3))
    hs = gaussian_hs_check(lat, c, m, f, g)
    t.add("helffer_sjostrand", hs.multiplier, hs.sparse, 0.0, 1e-10, hs.max_discrepancy <= 1e-10)
    V = make_quadratic(c, d)
    p = QuenchedProblem(lat, V, random_configuration(lat, 1.0, int(rng.integers(2**63))), 0.0, m,
                        rng.standard_normal((d,) + lat.shape))
    rep = solve_one_variable(p)
    t.add("neumann_quadratic_iterations", rep.iterations, 1, 0.0, 0.0, rep.iterations == 1 and rep.converged)

    sites = [lat.axis_site(r) for r in cfg.x if r < L // 2] or [lat.axis_site(1)]
    h = np.zeros((d,) + lat.shape)
    h[(0,) + (0,) * d] = 0.5
    e = sample(ModelSpec(lat, V, m), cfg.chains, cfg.steps, seed, burn_in=_burn(cfg), thin=cfg.thin,
               displacements=sites, linear=[h])
    Gm = periodic_green(lat, m**2)
    for s in sites:
        k, se = kstats_jackknife(e.X(s))
        tag = "_".join(str(v) for v in s)
        ref = 2 * (Gm[(0,) * d] - Gm[lat.index(s)]) / c
        t.add(f"var_X_{tag}", k[1], ref, se[1], 3 * se[1], abs(k[1] - ref) <= 3 * se[1])
        t.add(f"k3_X_{tag}", k[2], 0.0, se[2], 3 * se[2], abs(k[2]) <= 3 * se[2])
    from .sampler import check_brascamp_lieb
    bl = check_brascamp_lieb(e, h)
    ref = gaussian_log_moment(lat, c, m, h)
    t.add("log_moment_gaussian", bl.log_moment, ref, bl.se, 3 * bl.se, abs(bl.log_moment - ref) <= 3 * bl.se)
    t.add("brascamp_lieb", bl.log_moment, bl.bound, bl.se, 3 * bl.se, bl.holds)
    failed = [r[0] for r in t.rows if not r[-1]]
    if failed:
        info["failed_checks"] = failed
    return t, []


HANDLERS = {"green": cmd_green, "czo-norm": cmd_czo, "neumann": cmd_neumann, "sample": cmd_sample,
            "cumulants": cmd_cumulants, "verify-all": cmd_verify_all}


def build_parser():
    ap = argparse.ArgumentParser(prog="gradphi", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--out", required=True, help="CSV output path")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    ap.add_argument("--strict", action="store_true", help="treat non-convergence as a numerical failure")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.time()
    try:
        text = open(args.config).read() if args.config else ""
        cfg = parse_config(text, args.command)
    except (OSError, ConfigError) as exc:
        print(f"gradphi: {exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else cfg.seed
    if args.command in STOCHASTIC and seed is None:
        print(f"gradphi: {args.command} is stochastic and needs a seed (--seed or 'seed =')", file=sys.stderr)
        return 1
    if seed is not None and seed < 0:
        print("gradphi: seed must be a nonnegative integer", file=sys.stderr)
        return 1
    info = {}
    try:
        with sfft.set_workers(max(1, args.threads)):
            table, problems = HANDLERS[args.command](cfg, seed, info)
    except (DomainError, ShapeError, UnsupportedDimensionError, ResourceError) as exc:
        print(f"gradphi: precondition failed: {exc}", file=sys.stderr)
        return 1
    except (SamplingError, ConvergenceError, CertificationError, FloatingPointError) as exc:
        print(f"gradphi: numerical failure: {exc}", file=sys.stderr)
        return 2
    table.write(args.out)
    prov = {
        "command": args.command,
        "config": {k: v for k, v in cfg.values.items()},
        "config_lines": cfg.lines,
        "seed": seed,
        "threads": args.threads,
        "strict": args.strict,
        "versions": {"gradphi": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": time.time() - t0,
        "problems": problems,
        "info": info,
    }
    with open(args.out + ".provenance.json", "w") as fh:
        json.dump(prov, fh, indent=2, default=float)
    for p in problems:
        print(f"gradphi: warning: {p}", file=sys.stderr)
    if info.get("failed_checks"):
        print(f"gradphi: failed checks: {info['failed_checks']}", file=sys.stderr)
        return 2
    if problems and args.strict:
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
