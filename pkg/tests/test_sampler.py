import numpy as np
import pytest
from scipy import integrate

from gradphi.errors import DomainError
from gradphi.greens import periodic_green
from gradphi.potential import make_dipole, make_quadratic
from gradphi.sampler import (ModelSpec, check_brascamp_lieb, diagnose, gaussian_log_moment, load_checkpoint,
                             sample, sample_increments, stein_direction)
from gradphi.stats import jackknife_function, block_units, kstats_jackknife
from gradphi.torus import TorusLattice


def gaussian_var(lat, c, m, x):
    G = periodic_green(lat, m**2 / c)
    return 2.0 * (G.flat[0] - G[tuple(x)]) / c


def two_site_moments(a, m, mu):
    # on L = 2, d = 1 the increment X has density exp(-2 V(X) - m^2 X^2 / 4 + mu X)
    V = make_dipole(a, 1)
    w = lambda t: np.exp(-2 * V.value(np.array([t])) - m**2 * t**2 / 4 + mu * t)
    Z = integrate.quad(w, -30, 30, limit=200)[0]
    return [integrate.quad(lambda t: t**k * w(t), -30, 30, limit=200)[0] / Z for k in (1, 2)]


def mean_se(s):
    est, se = jackknife_function(block_units(s, 10), lambda v: v)
    return float(est), float(se)


def test_stein_variance_matches_reference_gaussian():
    lat = TorusLattice(2, 8)
    spec = ModelSpec(lat, make_quadratic(2.0, 2), 0.3)
    _, s2 = stein_direction(spec, (0, 3))
    assert s2 == pytest.approx(gaussian_var(lat, 2.0, 0.3, (0, 3)), rel=1e-12)


@pytest.mark.parametrize("x", [(0, 1), (2, 3)])
def test_gaussian_variance(x):
    lat = TorusLattice(2, 8)
    spec = ModelSpec(lat, make_quadratic(2.0, 2), 0.3)
    e = sample(spec, 4, 2500, seed=7, displacements=[x], step_size=2.0)
    assert np.all(e.acceptance > 0.999)
    k, se = kstats_jackknife(e.X(x), n_blocks=10)
    assert abs(k[1] - gaussian_var(lat, 2.0, 0.3, x)) < 4 * se[1]
    assert abs(k[0]) < 4 * se[0]


def test_gaussian_tilt_shifts_mean():
    lat = TorusLattice(2, 8)
    x = (0, 2)
    spec = ModelSpec(lat, make_quadratic(1.0, 2), 0.5, mu=0.4, x=x)
    e = sample(spec, 4, 2500, seed=3, step_size=2.0)
    est, se = mean_se(e.X(x))
    assert abs(est - 0.4 * gaussian_var(lat, 1.0, 0.5, x)) < 4 * se


@pytest.mark.parametrize("mu", [0.0, 0.8])
def test_two_site_torus_against_quadrature(mu):
    lat = TorusLattice(1, 2)
    spec = ModelSpec(lat, make_dipole(0.5, 1), 0.5, mu=mu, x=(1,))
    m1, m2 = two_site_moments(0.5, 0.5, mu)
    for run in (sample(spec, 4, 20000, seed=11),
                sample_increments(spec, 4, 20000, seed=11, group=2)):
        X = run.X((1,))
        a, sa = mean_se(X)
        b, sb = mean_se(X**2)
        assert abs(a - m1) < 4 * sa and abs(b - m2) < 4 * sb


def test_increment_sampler_gaussian_variance():
    lat = TorusLattice(1, 32)
    spec = ModelSpec(lat, make_quadratic(1.5, 1), 0.2)
    e = sample_increments(spec, 4, 3000, seed=5, displacements=[(3,), (10,)])
    for x in [(3,), (10,)]:
        k, se = kstats_jackknife(e.X(x), n_blocks=10)
        assert abs(k[1] - gaussian_var(lat, 1.5, 0.2, x)) < 4 * se[1]


def test_increment_sampler_input_checks():
    spec = ModelSpec(TorusLattice(1, 12), make_dipole(0.2, 1), 0.1)
    with pytest.raises(DomainError):
        sample_increments(spec, 2, 10, seed=0, group=5)
    with pytest.raises(DomainError):
        sample_increments(spec, 1, 10, seed=0)
    with pytest.raises(DomainError):
        sample_increments(ModelSpec(TorusLattice(2, 4), make_dipole(0.2, 2), 0.1), 2, 10, seed=0)


def test_seed_reproducibility():
    spec = ModelSpec(TorusLattice(2, 6), make_dipole(0.3, 2), 0.2)
    a = sample(spec, 3, 120, seed=9)
    b = sample(spec, 3, 120, seed=9)
    c = sample(spec, 3, 120, seed=10)
    assert np.array_equal(a.records["X"], b.records["X"])
    assert not np.array_equal(a.records["X"], c.records["X"])


def test_checkpoint_resume_is_exact(tmp_path):
    spec = ModelSpec(TorusLattice(2, 6), make_dipole(0.3, 2), 0.2, mu=0.1, x=(1, 0))
    path = str(tmp_path / "chk.bin")
    full = sample(spec, 3, 300, seed=4, checkpoint=path, checkpoint_at=150)
    step, _, _, fields = load_checkpoint(path, spec, 3)
    assert step == 150 and fields.shape == (3, 6, 6)
    rest = sample(spec, 3, 300, seed=4, resume=path)
    k = rest.n_records
    assert k == 150
    for name in ("X", "energy", "stein"):
        assert np.array_equal(full.records[name][:, -k:], rest.records[name])
    assert np.array_equal(full.final_fields, rest.final_fields)
    other = ModelSpec(TorusLattice(2, 6), make_dipole(0.3, 2), 0.3, mu=0.1, x=(1, 0))
    with pytest.raises(DomainError):
        load_checkpoint(path, other)


def test_spec_and_run_validation():
    lat = TorusLattice(2, 4)
    with pytest.raises(DomainError):
        ModelSpec(lat, make_dipole(0.2, 2), 0.0)
    with pytest.raises(DomainError):
        ModelSpec(lat, make_dipole(0.2, 2), 0.1, mu=0.5)
    with pytest.raises(DomainError):
        ModelSpec(lat, make_dipole(0.2, 1), 0.1)
    spec = ModelSpec(lat, make_dipole(0.2, 2), 0.1)
    with pytest.raises(DomainError):
        sample(spec, 1, 10, seed=0)
    with pytest.raises(DomainError):
        sample(spec, 2, 10, seed=0, init="hot")
    with pytest.raises(DomainError):
        sample(spec, 2, 10, seed=0, burn_in=10)


def test_diagnose():
    spec = ModelSpec(TorusLattice(2, 6), make_quadratic(1.0, 2), 0.5)
    e = sample(spec, 4, 1000, seed=1, step_size=2.0)
    rep = diagnose(e)
    assert rep.converged and not rep.flagged
    assert all(v > 100 for v in rep.ess.values())
    with pytest.raises(DomainError):
        diagnose(sample(spec, 4, 50, seed=1))


def test_diagnose_flags_unmixed_chains():
    # tiny frozen step and dispersed starts: chains stay apart
    spec = ModelSpec(TorusLattice(2, 6), make_dipole(0.3, 2), 0.05)
    e = sample(spec, 4, 300, seed=2, init="dispersed", step_size=1e-6, burn_in=0)
    assert not diagnose(e).converged


def test_brascamp_lieb_gaussian_is_sharp(rng):
    lat = TorusLattice(2, 6)
    h = np.zeros((2,) + lat.shape)
    h[0, 0, 0], h[1, 2, 3] = 0.6, -0.4
    spec = ModelSpec(lat, make_quadratic(1.0, 2), 0.3)
    e = sample(spec, 4, 2500, seed=8, linear=[h], step_size=2.0)
    rep = check_brascamp_lieb(e, h)
    exact = gaussian_log_moment(lat, 1.0, 0.3, h)
    assert rep.sharp_bound == pytest.approx(exact, rel=1e-12)
    assert abs(rep.log_moment - exact) < 4 * rep.se
    assert rep.holds and rep.bound >= rep.sharp_bound


def test_brascamp_lieb_dipole_holds():
    lat = TorusLattice(2, 6)
    h = np.zeros((2,) + lat.shape)
    h[0, 1, 1] = 0.8
    spec = ModelSpec(lat, make_dipole(0.3, 2), 0.3)
    e = sample(spec, 4, 3000, seed=6, keep_fields=True, thin=5)
    rep = check_brascamp_lieb(e, h)
    assert rep.log_moment <= rep.bound + 3 * rep.se
