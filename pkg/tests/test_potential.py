import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradphi.errors import CertificationError, DomainError
from gradphi.potential import (CustomPotential, DipolePotential, QuadraticPotential, certify_constants,
                               make_dipole, make_quadratic)


def test_dipole_constants():
    V = make_dipole(0.25, 2)
    assert (V.lam, V.Lam, V.M) == (0.75, 1.25, 0.25)
    assert V.ratio == pytest.approx(0.6)


def test_quadratic_constants():
    V = make_quadratic(2.0, 3)
    assert V.lam == V.Lam == 2.0 and V.M == 0.0
    z = np.arange(6.0).reshape(3, 2)
    assert np.allclose(V.value(z), (z**2).sum(axis=0))


@pytest.mark.parametrize("bad", [-0.1, 1.0, 1.5])
def test_dipole_rejects_activity(bad):
    with pytest.raises(DomainError):
        DipolePotential(bad, 2)


def test_quadratic_rejects_nonpositive_stiffness():
    with pytest.raises(DomainError):
        QuadraticPotential(0.0, 2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.9), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_derivatives_match_finite_differences(a, d, seed):
    V = make_dipole(a, d)
    rng = np.random.default_rng(seed)
    z = rng.uniform(-6, 6, size=(d, 5))
    dz = rng.standard_normal((d, 5))
    eps = 1e-5
    fd = (V.value(z + eps * dz) - V.value(z - eps * dz)) / (2 * eps)
    assert np.allclose(fd, (V.gradient(z) * dz).sum(axis=0), atol=1e-6)
    Hfd = (V.gradient(z + eps * dz) - V.gradient(z - eps * dz)) / (2 * eps)
    assert np.allclose(Hfd, np.einsum("ij...,j...->i...", V.hessian(z), dz), atol=1e-6)
    u, v = rng.standard_normal((2, d, 5))
    Tfd = (np.einsum("i...,ij...,j...->...", u, V.hessian(z + eps * dz), v)
           - np.einsum("i...,ij...,j...->...", u, V.hessian(z - eps * dz), v)) / (2 * eps)
    assert np.allclose(Tfd, V.third(z, u, v, dz), atol=1e-6)


def test_contraction_is_one_minus_scaled_hessian():
    V = make_dipole(0.4, 2)
    z = np.random.default_rng(0).uniform(-3, 3, (2, 7))
    b = V.contraction(z)
    assert np.allclose(b, np.eye(2)[:, :, None] - V.hessian(z) / V.Lam)


def test_certification_passes_for_exact_constants():
    rep = certify_constants(make_dipole(0.25, 2), 20000, seed=3)
    assert rep.samples == 20000
    assert rep.lower_margin >= -1e-12 and rep.upper_margin >= -1e-12 and rep.third_margin >= -1e-12
    # the extremes of 1 - a cos are approached by 20k uniform draws
    assert rep.min_eigenvalue == pytest.approx(0.75, abs=1e-3)
    assert rep.max_eigenvalue == pytest.approx(1.25, abs=1e-3)


def test_certification_is_reproducible():
    V = make_dipole(0.3, 2)
    a, b = certify_constants(V, 10000, seed=7), certify_constants(V, 10000, seed=7)
    assert a == b


def _overclaimed_dipole(a, lam, Lam, M):
    V = make_dipole(a, 1)
    return CustomPotential(1, V.value, V.gradient, V.hessian, V.third, lam, Lam, M)


@pytest.mark.parametrize("lam, Lam, M", [(0.8, 1.25, 0.25), (0.75, 1.2, 0.25), (0.75, 1.25, 0.2)])
def test_certification_reports_witness(lam, Lam, M):
    V = _overclaimed_dipole(0.25, lam, Lam, M)
    with pytest.raises(CertificationError) as exc:
        certify_constants(V, 5000, seed=1)
    z = np.atleast_1d(exc.value.witness)
    true = make_dipole(0.25, 1)
    H = true.hessian(z.reshape(1, 1))[0, 0, 0]
    assert H < lam or H > Lam or abs(true.third(z.reshape(1, 1), *(np.ones((1, 1)),) * 3)[0]) > M


def test_certification_rejects_empty_sample():
    with pytest.raises(DomainError):
        certify_constants(make_dipole(0.1, 1), 0, seed=0)
