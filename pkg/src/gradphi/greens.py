"""Periodic Green's functions and Calderon-Zygmund operators as Fourier multipliers.

With the forward difference ``grad_j`` the Fourier symbol is
``D_j(k) = exp(i k_j) - 1`` and the adjoint has symbol ``conj(D_j)``, so

* ``[grad* grad + rho]^{-1}``                has symbol ``1 / (|D|^2 + rho)``,
* ``T_rho = grad [grad* grad + rho]^{-1} grad*`` has symbol ``D D^H / (|D|^2 + rho)``,
* ``T_{1,rho}`` on ``Q x Q`` has symbol ``D_y D_y^H / (|D_y|^2 + |D_z|^2 + rho)``.

Real fields are transformed with ``rfftn``; a symbol is stored on the half
grid, which contains every mode up to complex conjugation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from .calculus import grad
from .errors import DomainError, ResourceError, ShapeError
from .torus import TorusLattice, Weight

# Two-point operators need N^2 storage; cap N = L^d at 32^2.
TWO_POINT_MAX_SITES = 1024


def difference_symbols(shape: tuple[int, ...]) -> list[np.ndarray]:
    """``D_j(k)`` for each axis of a periodic grid, broadcast on the rfft grid."""
    n = len(shape)
    out = []
    for j, L in enumerate(shape):
        k = 2 * np.pi * (sfft.rfftfreq(L) if j == n - 1 else sfft.fftfreq(L))
        bshape = [1] * n
        bshape[j] = k.size
        out.append((np.exp(1j * k) - 1.0).reshape(bshape))
    return out


def spectral_laplacian(shape: tuple[int, ...]) -> np.ndarray:
    """``|D(k)|^2 = sum_j (2 - 2 cos k_j)`` on the rfft grid (real, broadcast to full)."""
    total = 0.0
    for D in difference_symbols(shape):
        total = total + np.abs(D) ** 2
    return np.broadcast_to(total, _rfft_shape(shape)).copy()


def _rfft_shape(shape):
    return tuple(shape[:-1]) + (shape[-1] // 2 + 1,)


def periodic_green(lat: TorusLattice, rho: float) -> np.ndarray:
    """``G_{rho,Q}`` solving ``[grad* grad + rho] G = delta_0`` on the torus."""
    if not rho > 0:
        raise DomainError(f"rho must be positive (the massless inverse is undefined), got {rho}")
    return sfft.irfftn(1.0 / (spectral_laplacian(lat.shape) + rho), s=lat.shape)


def resolvent_apply(f: np.ndarray, shape: tuple[int, ...], stiffness: float, mass2: float) -> np.ndarray:
    """Solve ``[stiffness * grad* grad + mass2] u = f`` on a periodic grid."""
    if not mass2 > 0 or not stiffness > 0:
        raise DomainError("need stiffness > 0 and mass2 > 0")
    axes = tuple(range(-len(shape), 0))
    fk = sfft.rfftn(f, axes=axes)
    return sfft.irfftn(fk / (stiffness * spectral_laplacian(shape) + mass2), s=shape, axes=axes)


@dataclass
class SpectralKernel:
    """A matrix-valued Fourier multiplier on a periodic grid.

    ``apply`` contracts the leading component axis of its argument with the
    symbol; axes between the component axis and the trailing grid axes are
    carried along unchanged.

    Attributes
    ----------
    lat : TorusLattice
        The single-site lattice ``Q``.
    kind : str
        One of ``"T"``, ``"T(x)I"``, ``"T1"``, ``"T2"``.
    rho : float
    grid : tuple
        Shape of the grid the multiplier acts on (``Q`` or ``Q x Q``).
    symbol : complex array of shape ``(d, d, *rfft_grid)``, possibly broadcast.
    """

    lat: TorusLattice
    kind: str
    rho: float
    grid: tuple[int, ...]
    symbol: np.ndarray = field(repr=False)

    @property
    def two_point(self) -> bool:
        return len(self.grid) == 2 * self.lat.d

    def apply(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        n = len(self.grid)
        d = self.symbol.shape[0]
        if h.shape[0] != d or h.shape[-n:] != self.grid:
            raise ShapeError(f"kernel on grid {self.grid} with {d} components cannot act on {h.shape}")
        passenger = h.shape[1:-n]
        axes = tuple(range(-n, 0))
        hk = sfft.rfftn(h, axes=axes)
        sym = self.symbol.reshape(self.symbol.shape[:2] + (1,) * len(passenger) + self.symbol.shape[2:])
        out = np.zeros(hk.shape, dtype=complex)
        for i in range(d):
            for j in range(d):
                out[i] += sym[i, j] * hk[j]
        return sfft.irfftn(out, s=self.grid, axes=axes)

    def mode_norms(self) -> np.ndarray:
        """Spectral norm of the symbol matrix at every mode of the half grid."""
        full = np.broadcast_to(self.symbol, self.symbol.shape[:2] + _rfft_shape(self.grid))
        mats = np.moveaxis(full, (0, 1), (-2, -1))
        herm = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
        return np.abs(np.linalg.eigvalsh(herm)).max(axis=-1)

    def multiplier_norm(self) -> float:
        """Exact unweighted ``l^2`` operator norm: the largest mode norm."""
        return float(self.mode_norms().max())


def _outer_symbol(Ds: list[np.ndarray], denom: np.ndarray) -> np.ndarray:
    d = len(Ds)
    sym = np.empty((d, d) + denom.shape, dtype=complex)
    for i in range(d):
        for j in range(d):
            sym[i, j] = Ds[i] * np.conj(Ds[j]) / denom
    return sym


def make_T(lat: TorusLattice, rho: float) -> SpectralKernel:
    """``T_rho = grad [grad* grad + rho]^{-1} grad*`` on ``Q``."""
    _check_rho(rho)
    Ds = difference_symbols(lat.shape)
    denom = spectral_laplacian(lat.shape) + rho
    return SpectralKernel(lat, "T", rho, lat.shape, _outer_symbol(Ds, denom))


def _check_two_point(lat):
    if lat.N > TWO_POINT_MAX_SITES:
        raise ResourceError(f"two-point fields are capped at {TWO_POINT_MAX_SITES} sites per factor "
                            f"(got L={lat.L}, d={lat.d})")


def make_T_tensor_I(lat: TorusLattice, rho: float) -> SpectralKernel:
    """``T_rho (x) I``: ``T_rho`` in ``y``, identity in ``z``."""
    _check_rho(rho)
    _check_two_point(lat)
    grid = lat.shape * 2
    Ds = difference_symbols(grid)[: lat.d]
    denom = 0.0
    for D in Ds:
        denom = denom + np.abs(D) ** 2
    return SpectralKernel(lat, "T(x)I", rho, grid, _outer_symbol(Ds, denom + rho))


def _two_variable(lat, rho, block):
    _check_rho(rho)
    _check_two_point(lat)
    grid = lat.shape * 2
    Ds = difference_symbols(grid)
    denom = spectral_laplacian(grid) + rho
    part = Ds[: lat.d] if block == "y" else Ds[lat.d:]
    return _outer_symbol(part, denom), grid


def make_T1(lat: TorusLattice, rho: float) -> SpectralKernel:
    """``T_{1,rho} = grad_y [grad_y* grad_y + grad_z* grad_z + rho]^{-1} grad_y*``."""
    sym, grid = _two_variable(lat, rho, "y")
    return SpectralKernel(lat, "T1", rho, grid, sym)


def make_T2(lat: TorusLattice, rho: float) -> SpectralKernel:
    """The ``z``-analogue of :func:`make_T1`."""
    sym, grid = _two_variable(lat, rho, "z")
    return SpectralKernel(lat, "T2", rho, grid, sym)


def _check_rho(rho):
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")


def apply_T(kernel: SpectralKernel, h: np.ndarray) -> np.ndarray:
    """Apply ``T_rho`` (or ``T_rho (x) I``) to a vector field."""
    if kernel.kind not in ("T", "T(x)I"):
        raise ShapeError(f"apply_T needs a T kernel, got {kernel.kind}")
    return kernel.apply(h)


def apply_T1(kernel: SpectralKernel, h: np.ndarray) -> np.ndarray:
    """Apply ``T_{1,rho}`` to a two-point field with ``(y, z)`` component blocks.

    ``h`` has shape ``(2d, *Q, *Q)``; the first ``d`` components form the
    ``y``-block.  ``T_{1,rho}`` reads and writes only the ``y``-block.
    """
    return _apply_block(kernel, h, "T1", 0)


def apply_T2(kernel: SpectralKernel, h: np.ndarray) -> np.ndarray:
    """Apply ``T_{2,rho}``, which reads and writes only the ``z``-block."""
    return _apply_block(kernel, h, "T2", 1)


def _apply_block(kernel, h, kind, block):
    if kernel.kind != kind:
        raise ShapeError(f"expected a {kind} kernel, got {kernel.kind}")
    d = kernel.lat.d
    h = np.asarray(h, dtype=float)
    if h.shape != (2 * d,) + kernel.grid:
        raise ShapeError(f"two-point vector field must have shape {(2 * d,) + kernel.grid}, got {h.shape}")
    out = np.zeros_like(h)
    sl = slice(0, d) if block == 0 else slice(d, 2 * d)
    out[sl] = kernel.apply(h[sl])
    return out


def swap_two_point(h: np.ndarray, d: int) -> np.ndarray:
    """``(S h)(y, z) = (h_z(z, y), h_y(z, y))``: exchange variables and blocks."""
    h = np.asarray(h)
    n = h.ndim - 1
    perm = [0] + [1 + d + k for k in range(n // 2)] + [1 + k for k in range(n // 2)]
    swapped = np.transpose(h, perm)
    return np.concatenate([swapped[d:], swapped[:d]])


# --- weighted norms -------------------------------------------------------------

@dataclass
class NormEstimate:
    value: float
    converged: bool
    iterations: int


def _weight_array(kernel: SpectralKernel, w: Weight) -> np.ndarray:
    lat = kernel.lat
    if kernel.two_point:
        if not w.two_point:
            raise DomainError(f"{kernel.kind} acts on Q x Q and needs a two-point weight")
        return w.two_point_array(lat)
    if w.two_point:
        raise DomainError("T acts on Q and needs a one-point weight")
    return w.one_point_array(lat)


def estimate_weighted_norm(op: SpectralKernel, w: Weight, iters: int = 20000, seed: int = 0,
                           tol: float = 1e-12, method: str = "power") -> NormEstimate:
    """Lower-bound estimate of ``||op||`` on ``l^2_w``.

    Works with ``A^T A`` where ``A = w^{1/2} op w^{-1/2}``.  ``op`` is
    self-adjoint on unweighted ``l^2`` so ``A^T = w^{-1/2} op w^{1/2}``.

    ``method="power"`` runs power iteration from a seeded Gaussian start and
    stops once the relative change of the estimate drops below ``tol``.  The
    value ``||A v||`` for a unit ``v`` never exceeds the true norm.  When the
    top of the spectrum is clustered the remaining error is up to ``1e4 * tol``,
    hence the strict default.

    ``method="lanczos"`` hands the same operator to ARPACK (``eigsh``), which
    resolves clustered spectra in a few hundred products.
    """
    wa = _weight_array(op, w)
    sw, isw = np.sqrt(wa), 1.0 / np.sqrt(wa)
    d = op.symbol.shape[0]
    shape = (d,) + op.grid
    if method == "lanczos":
        n = int(np.prod(shape))
        count = [0]

        def matvec(x):
            count[0] += 1
            v = x.reshape(shape)
            return (isw * op.apply(wa * op.apply(isw * v))).reshape(-1)

        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            ev = spla.eigsh(spla.LinearOperator((n, n), matvec=matvec, dtype=float), k=1, which="LA",
                            v0=v0, tol=tol * 1e-4, maxiter=iters)[0][0]
            return NormEstimate(float(np.sqrt(max(ev, 0.0))), True, count[0])
        except spla.ArpackNoConvergence as exc:
            ev = exc.eigenvalues
            value = float(np.sqrt(max(ev.max(), 0.0))) if ev.size else 0.0
            return NormEstimate(value, False, count[0])
    if method != "power":
        raise DomainError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    prev = 0.0
    best = 0.0
    for it in range(1, iters + 1):
        Av = sw * op.apply(isw * v)
        sigma = float(np.linalg.norm(Av))
        best = max(best, sigma)
        if it > 1 and abs(sigma - prev) <= tol * sigma:
            return NormEstimate(best, True, it)
        prev = sigma
        v = isw * op.apply(sw * Av)
        nv = np.linalg.norm(v)
        if nv == 0:
            return NormEstimate(best, True, it)
        v /= nv
    return NormEstimate(best, False, iters)


def dense_matrix(op: SpectralKernel) -> np.ndarray:
    """Matrix of ``op`` in the flattened ``(component, site)`` basis."""
    d = op.symbol.shape[0]
    n = d * int(np.prod(op.grid))
    if n > 4096:
        raise ResourceError("dense operator matrices are limited to 4096 unknowns")
    basis = np.eye(n).reshape((n, d) + op.grid)
    cols = [op.apply(e).reshape(-1) for e in basis]
    return np.array(cols).T


def dense_weighted_norm(op: SpectralKernel, w: Weight) -> float:
    """Largest singular value of ``w^{1/2} op w^{-1/2}`` by dense SVD."""
    wa = np.broadcast_to(_weight_array(op, w), op.grid)
    d = op.symbol.shape[0]
    sw = np.tile(np.sqrt(wa).reshape(-1), d)
    A = sw[:, None] * dense_matrix(op) / sw[None, :]
    return float(np.linalg.norm(A, 2))


# --- decay of lattice Green's functions ---------------------------------------

@dataclass
class DecayReport:
    rho: float
    L: int
    d: int
    grad_sup: float   # sup |grad G| [1+|y|]^{d-1}
    hess_sup: float   # sup |grad grad* G| [1+|y|]^d
    third_sup: float  # sup |grad grad grad* G| [1+|y|]^{d+1}
    window: float


def green_derivatives(lat: TorusLattice, rho: float):
    """``G``, ``grad G``, ``grad_i grad*_j G`` and ``grad_k grad_i grad*_j G``."""
    G = periodic_green(lat, rho)
    d = lat.d
    gstar = np.stack([np.roll(G, 1, axis=j) - G for j in range(d)])  # grad*_j G
    g1 = grad(G, d=d)
    g2 = np.stack([grad(gstar[j], d=d) for j in range(d)], axis=1)  # [i, j]
    g3 = np.stack([grad(g2[i, j], d=d) for i in range(d) for j in range(d)], axis=1)
    g3 = g3.reshape((d, d, d) + lat.shape)
    return G, g1, g2, g3


def verify_decay(rho: float, L: int, d: int = 2) -> DecayReport:
    """Weighted sups of Green's function derivatives over ``|y| <= L/4``.

    Bounded values that are stable in ``L`` and ``rho`` reflect the decay
    ``|grad^k G(y)| <= C / [1+|y|]^{d-2+k}`` uniformly in ``rho``.
    """
    if d != 2:
        raise DomainError("decay verification is implemented for d=2")
    if L > 512:
        raise ResourceError("decay verification is capped at L=512")
    lat = TorusLattice(d, L)
    _, g1, g2, g3 = green_derivatives(lat, rho)
    r = lat.radius
    mask = r <= L / 4

    def sup(arr, power):
        mag = np.sqrt((arr.reshape((-1,) + lat.shape) ** 2).sum(axis=0))
        return float((mag * (1 + r) ** power)[mask].max())

    return DecayReport(rho, L, d, sup(g1, d - 1), sup(g2, d), sup(g3, d + 1), L / 4)
