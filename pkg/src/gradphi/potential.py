"""Uniformly convex gradient potentials ``V : R^d -> R``.

All evaluators take ``z`` with the component axis first, shape ``(d, ...)``,
so a gradient field ``grad(phi)`` can be passed directly.  Second derivatives
come back as ``(d, d, ...)`` arrays.  The third derivative is only ever used
through its trilinear action, so it is exposed that way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CertificationError, DomainError

CERTIFY_TOL = 1e-12
_CHUNK = 4096


class Potential:
    """Base class; subclasses fill in the derivatives and constants.

    Attributes
    ----------
    d : int
    lam, Lam : float
        Ellipticity bounds ``lam I <= V''(z) <= Lam I``.
    M : float
        Bound on ``|V'''(z)[u, v, w]| / (|u||v||w|)``.
    """

    d: int
    lam: float
    Lam: float
    M: float
    name = "potential"

    def value(self, z):
        raise NotImplementedError

    def gradient(self, z):
        raise NotImplementedError

    def hessian(self, z):
        raise NotImplementedError

    def third(self, z, u, v, w):
        raise NotImplementedError

    @property
    def ratio(self) -> float:
        """``lam / Lam``."""
        return self.lam / self.Lam

    def contraction(self, z):
        """``b(z) = I - V''(z) / Lam``, shape ``(d, d, ...)``."""
        H = self.hessian(z)
        eye = np.eye(self.d).reshape((self.d, self.d) + (1,) * (H.ndim - 2))
        return eye - H / self.Lam

    def params(self) -> dict:
        return {"kind": self.name}


class QuadraticPotential(Potential):
    name = "quadratic"

    def __init__(self, c: float, d: int):
        if not c > 0:
            raise DomainError(f"quadratic stiffness must be positive, got {c}")
        self.c = float(c)
        self.d = int(d)
        self.lam = self.Lam = self.c
        self.M = 0.0

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * self.c * (z**2).sum(axis=0)

    def gradient(self, z):
        return self.c * np.asarray(z, dtype=float)

    def hessian(self, z):
        z = np.asarray(z, dtype=float)
        H = np.zeros((self.d, self.d) + z.shape[1:])
        for j in range(self.d):
            H[j, j] = self.c
        return H

    def contraction(self, z):
        z = np.asarray(z, dtype=float)
        return np.zeros((self.d, self.d) + z.shape[1:])

    def third(self, z, u, v, w):
        return np.zeros(np.asarray(z, dtype=float).shape[1:])

    def params(self):
        return {"kind": self.name, "c": self.c}


class DipolePotential(Potential):
    """``V(z) = |z|^2/2 + a sum_j cos z_j``: the lattice dipole gas."""

    name = "dipole"

    def __init__(self, a: float, d: int):
        if not 0 <= a < 1:
            raise DomainError(f"dipole activity must lie in [0, 1) for convexity, got {a}")
        self.a = float(a)
        self.d = int(d)
        self.lam = 1.0 - self.a
        self.Lam = 1.0 + self.a
        self.M = self.a

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * (z**2).sum(axis=0) + self.a * np.cos(z).sum(axis=0)

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        return z - self.a * np.sin(z)

    def hessian(self, z):
        z = np.asarray(z, dtype=float)
        H = np.zeros((self.d, self.d) + z.shape[1:])
        for j in range(self.d):
            H[j, j] = 1.0 - self.a * np.cos(z[j])
        return H

    def contraction(self, z):
        z = np.asarray(z, dtype=float)
        b = np.zeros((self.d, self.d) + z.shape[1:])
        for j in range(self.d):
            b[j, j] = self.a * (1.0 + np.cos(z[j])) / self.Lam
        return b

    def third(self, z, u, v, w):
        z = np.asarray(z, dtype=float)
        return (self.a * np.sin(z) * np.asarray(u) * np.asarray(v) * np.asarray(w)).sum(axis=0)

    def params(self):
        return {"kind": self.name, "a": self.a}


class CustomPotential(Potential):
    """A user-supplied potential with claimed constants.

    Run :func:`certify_constants` before trusting ``lam``, ``Lam`` and ``M``.
    """

    name = "custom"

    def __init__(self, d, value, gradient, hessian, third, lam, Lam, M):
        if not 0 < lam <= Lam or M < 0:
            raise DomainError("need 0 < lam <= Lam and M >= 0")
        self.d = int(d)
        self._value, self._gradient, self._hessian, self._third = value, gradient, hessian, third
        self.lam, self.Lam, self.M = float(lam), float(Lam), float(M)

    def value(self, z):
        return self._value(np.asarray(z, dtype=float))

    def gradient(self, z):
        return self._gradient(np.asarray(z, dtype=float))

    def hessian(self, z):
        return self._hessian(np.asarray(z, dtype=float))

    def third(self, z, u, v, w):
        return self._third(np.asarray(z, dtype=float), u, v, w)


def make_quadratic(c: float, d: int) -> QuadraticPotential:
    return QuadraticPotential(c, d)


def make_dipole(a: float, d: int) -> DipolePotential:
    return DipolePotential(a, d)


@dataclass
class CertificationReport:
    samples: int
    min_eigenvalue: float
    max_eigenvalue: float
    max_third: float
    lower_margin: float  # min eigenvalue - lam
    upper_margin: float  # Lam - max eigenvalue
    third_margin: float  # M - max |V'''[u,v,w]| / |u||v||w|


def certify_constants(V: Potential, sample_count: int, seed: int, scale: float = 2 * np.pi,
                      tol: float = CERTIFY_TOL) -> CertificationReport:
    """Randomized check of ``lam <= V'' <= Lam`` and the third-derivative bound.

    Arguments ``z`` are drawn uniformly from ``[-scale, scale]^d``; the trilinear
    bound is probed both on random unit triples and on the diagonal ``u=v=w``.
    Work is split into fixed-size chunks with spawned seed streams, so the
    result depends only on ``seed`` and ``sample_count``.

    Raises
    ------
    CertificationError
        If any sample violates a bound by more than ``tol``; ``witness`` is
        the offending ``z``.
    """
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    n_chunks = -(-sample_count // _CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    lo, hi, t3 = np.inf, -np.inf, 0.0
    for k, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        n = min(_CHUNK, sample_count - k * _CHUNK)
        z = rng.uniform(-scale, scale, size=(V.d, n))
        H = np.moveaxis(V.hessian(z), (0, 1), (-2, -1))
        eig = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))
        i_lo, i_hi = np.argmin(eig[:, 0]), np.argmax(eig[:, -1])
        if eig[i_lo, 0] < V.lam - tol:
            raise CertificationError(f"V'' has eigenvalue {eig[i_lo, 0]} < lam={V.lam}", z[:, i_lo])
        if eig[i_hi, -1] > V.Lam + tol:
            raise CertificationError(f"V'' has eigenvalue {eig[i_hi, -1]} > Lam={V.Lam}", z[:, i_hi])
        lo, hi = min(lo, eig[i_lo, 0]), max(hi, eig[i_hi, -1])

        u, v, w = (_unit(rng.standard_normal((V.d, n))) for _ in range(3))
        r = np.maximum(np.abs(V.third(z, u, v, w)), np.abs(V.third(z, u, u, u)))
        i3 = np.argmax(r)
        if r[i3] > V.M + tol:
            raise CertificationError(f"|V'''| ratio {r[i3]} exceeds M={V.M}", z[:, i3])
        t3 = max(t3, float(r[i3]))
    return CertificationReport(sample_count, float(lo), float(hi), t3,
                               float(lo - V.lam), float(V.Lam - hi), float(V.M - t3))


def _unit(x):
    return x / np.linalg.norm(x, axis=0, keepdims=True)
