"""Periodic cubic lattices, translations, periodic distance and power weights.

Fields are numpy arrays whose *trailing* ``d`` axes are the lattice axes.
Array index ``i`` along an axis holds the site with canonical coordinate
``i`` if ``i < L/2`` and ``i - L`` otherwise, so the canonical window is
``[-L/2, L/2)^d`` and the origin sits at index ``(0, ..., 0)``.  This is the
layout FFT routines expect.

Leading axes carry components: a scalar field has shape ``lat.shape``, a
vector field ``(d, *lat.shape)``, and a two-point field on ``Q x Q`` has shape
``(*components, *lat.shape, *lat.shape)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from numbers import Integral

import numpy as np

from .errors import DomainError, ResourceError

# Largest side length for which dense Q x Q weight tables are built.
TWO_POINT_TABLE_MAX_L = 64


@dataclass(frozen=True)
class TorusLattice:
    """The periodic cube ``Q_L`` in ``d`` dimensions."""

    d: int
    L: int

    def __post_init__(self):
        if not isinstance(self.d, Integral) or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d!r}")
        if not isinstance(self.L, Integral) or self.L < 2 or self.L % 2:
            raise DomainError(f"side length must be a positive even integer, got {self.L!r}")

    @property
    def N(self) -> int:
        return self.L**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        """Negative axis numbers of the lattice axes of a field."""
        return tuple(range(-self.d, 0))

    @cached_property
    def coords(self) -> np.ndarray:
        """Canonical coordinates, shape ``(d, *shape)``."""
        c1 = np.arange(self.L)
        c1 = np.where(c1 < self.L // 2, c1, c1 - self.L)
        return np.stack(np.meshgrid(*([c1] * self.d), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """``|y|`` of the canonical representative of every site.

        On the torus this equals the periodic distance from the origin.
        """
        return np.sqrt((self.coords.astype(float) ** 2).sum(axis=0))

    def canonical(self, y) -> tuple[int, ...]:
        """Reduce integer coordinates to the canonical window."""
        y = self._validate(y)
        half = self.L // 2
        return tuple(((c + half) % self.L) - half for c in y)

    def index(self, y) -> tuple[int, ...]:
        """Array index of site ``y``."""
        return tuple(c % self.L for c in self._validate(y))

    def delta(self, y=None) -> np.ndarray:
        """Scalar field equal to 1 at ``y`` (default: origin) and 0 elsewhere."""
        f = np.zeros(self.shape)
        f[self.index(y if y is not None else (0,) * self.d)] = 1.0
        return f

    def axis_site(self, r: int, axis: int = 0) -> tuple[int, ...]:
        """The site ``r * e_axis``."""
        y = [0] * self.d
        y[axis] = r
        return tuple(y)

    def _validate(self, y) -> tuple[int, ...]:
        try:
            y = tuple(y)
        except TypeError:
            y = (y,)
        if len(y) != self.d or not all(isinstance(c, Integral) for c in y):
            raise DomainError(f"{y!r} is not a site of a {self.d}-dimensional lattice")
        return tuple(int(c) for c in y)


def periodic_distance(lat: TorusLattice, y, z) -> float:
    """Shortest Euclidean distance between ``y`` and ``z`` over periodic images."""
    y = np.array(lat.canonical(y))
    z = np.array(lat.canonical(z))
    diff = z - y
    best = np.inf
    for shift in itertools.product((-lat.L, 0, lat.L), repeat=lat.d):
        best = min(best, float(np.linalg.norm(diff + np.array(shift))))
    return best


def translate(lat: TorusLattice, h: np.ndarray, x) -> np.ndarray:
    """Return ``tau_x h`` with ``(tau_x h)(z) = h(x + z)``."""
    x = lat.canonical(x)
    h = np.asarray(h)
    if h.shape[-lat.d:] != lat.shape:
        raise DomainError(f"field of shape {h.shape} is not defined on all sites of {lat}")
    return np.roll(h, shift=tuple(-c for c in x), axis=lat.axes)


@dataclass(frozen=True)
class Weight:
    """Power weight ``[1+|y|]^alpha`` or ``[1+|y|]^alpha [1+gamma(y,z)]^beta``.

    ``beta=None`` selects the one-point weight.
    """

    d: int
    alpha: float
    beta: float | None = None

    def __post_init__(self):
        if abs(self.alpha) >= self.d:
            raise DomainError(f"|alpha| must be < d={self.d}, got alpha={self.alpha}")
        if self.beta is not None and abs(self.beta) >= self.d:
            raise DomainError(f"|beta| must be < d={self.d}, got beta={self.beta}")

    @property
    def two_point(self) -> bool:
        return self.beta is not None

    def __call__(self, lat: TorusLattice, y, z=None) -> float:
        return weight_eval(self, lat, y, z)

    def one_point_array(self, lat: TorusLattice) -> np.ndarray:
        """``[1+|y|]^alpha`` on every site."""
        self._check_lattice(lat)
        return (1.0 + lat.radius) ** self.alpha

    def distance_factor(self, lat: TorusLattice) -> np.ndarray:
        """``[1+gamma(0,u)]^beta`` indexed by the separation ``u = y - z``."""
        self._check_lattice(lat)
        return (1.0 + lat.radius) ** (self.beta or 0.0)

    def two_point_array(self, lat: TorusLattice) -> np.ndarray:
        """Dense table of ``w(y,z)`` with shape ``(*shape, *shape)``."""
        if not self.two_point:
            raise DomainError("one-point weight has no two-point table")
        if lat.L > TWO_POINT_TABLE_MAX_L:
            raise ResourceError(f"two-point weight tables are capped at L={TWO_POINT_TABLE_MAX_L}")
        a = self.one_point_array(lat)
        sep = _separation_radius(lat)
        return a.reshape(lat.shape + (1,) * lat.d) * (1.0 + sep) ** self.beta

    def _check_lattice(self, lat: TorusLattice):
        if lat.d != self.d:
            raise DomainError(f"weight is for d={self.d}, lattice has d={lat.d}")


def weight_eval(w: Weight, lat: TorusLattice, y, z=None) -> float:
    """Evaluate a weight at a site (or a pair of sites for two-point weights)."""
    w._check_lattice(lat)
    ry = float(np.linalg.norm(lat.canonical(y)))
    value = (1.0 + ry) ** w.alpha
    if w.two_point:
        if z is None:
            raise DomainError("two-point weight needs both y and z")
        value *= (1.0 + periodic_distance(lat, y, z)) ** w.beta
    elif z is not None:
        raise DomainError("one-point weight takes a single site")
    return value


def _separation_radius(lat: TorusLattice) -> np.ndarray:
    """``gamma(y, z)`` as an array of shape ``(*shape, *shape)``."""
    L = lat.L
    idx = np.arange(L)
    diff = (idx[:, None] - idx[None, :]) % L
    per_axis = np.minimum(diff, L - diff).astype(float) ** 2
    # Interleave (y_k, z_k) pairs into (y_1..y_d, z_1..z_d) ordering.
    total = np.zeros(lat.shape + lat.shape)
    for k in range(lat.d):
        shape = [1] * (2 * lat.d)
        shape[k] = L
        shape[lat.d + k] = L
        total = total + per_axis.reshape(shape)
    return np.sqrt(total)
