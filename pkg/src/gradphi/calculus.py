"""Forward-difference gradient, its adjoint and gradient-field checks.

``grad`` and ``div_star`` act by periodic shifts on trailing lattice axes.
Passing ``axes`` restricts them to a subset of axes, which is how the
``y``- and ``z``-derivatives of two-point fields are formed.

The ``*_matrix`` helpers assemble the same stencils as sparse matrices.  They
are deliberately a separate code path and serve as the explicit operators
used for residual checks and direct solves.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError, UnsupportedDimensionError

DEFAULT_TOL = 1e-10


def _resolve_axes(ndim: int, axes) -> tuple[int, ...]:
    if axes is None:
        raise ShapeError("axes must be given for fields without a lattice")
    return tuple(a % ndim for a in axes)


def grad(phi: np.ndarray, axes=None, d: int | None = None) -> np.ndarray:
    """Componentwise forward difference ``phi(x + e_i) - phi(x)``.

    Parameters
    ----------
    phi : array
        Field whose trailing axes are lattice axes.
    axes : sequence of int, optional
        Lattice axes to differentiate along.  Defaults to the last ``d`` axes,
        with ``d = phi.ndim`` when neither is given.
    d : int, optional
        Number of trailing lattice axes (used only when ``axes`` is None).

    Returns
    -------
    array of shape ``(len(axes), *phi.shape)``
    """
    phi = np.asarray(phi, dtype=float)
    if axes is None:
        d = phi.ndim if d is None else d
        axes = range(-d, 0)
    axes = _resolve_axes(phi.ndim, axes)
    return np.stack([np.roll(phi, -1, axis=a) - phi for a in axes])


def div_star(h: np.ndarray, axes=None, d: int | None = None) -> np.ndarray:
    """Adjoint of :func:`grad`: ``sum_i h_i(x - e_i) - h_i(x)``.

    ``h`` has the component axis first; ``axes`` refer to the axes of a single
    component ``h[i]``.
    """
    h = np.asarray(h, dtype=float)
    if axes is None:
        d = h.ndim - 1 if d is None else d
        axes = range(-d, 0)
    axes = _resolve_axes(h.ndim - 1, axes)
    if h.shape[0] != len(axes):
        raise ShapeError(f"{h.shape[0]} components for {len(axes)} axes")
    out = np.zeros(h.shape[1:])
    for comp, a in zip(h, axes):
        out += np.roll(comp, 1, axis=a) - comp
    return out


def laplacian(phi: np.ndarray, axes=None, d: int | None = None) -> np.ndarray:
    """The nonnegative lattice Laplacian ``div_star(grad(phi))``."""
    phi = np.asarray(phi, dtype=float)
    if axes is None:
        d = phi.ndim if d is None else d
        axes = tuple(range(-d, 0))
    return div_star(grad(phi, axes=axes), axes=axes)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))


def check_gradient_constraint(omega: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    """True when a two-dimensional ``omega`` is the gradient of a periodic field.

    Every plaquette sum ``w1(x) + w2(x+e1) - w1(x+e2) - w2(x)`` must vanish, and
    so must every line sum of ``w_i`` around the torus in direction ``i``.
    Plaquette closure alone leaves the two torus holonomies free.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 3 or omega.shape[0] != 2:
        raise UnsupportedDimensionError("gradient constraint check is implemented for d=2 only")
    w1, w2 = omega
    plaquette = w1 + np.roll(w2, -1, axis=0) - np.roll(w1, -1, axis=1) - w2
    if np.max(np.abs(plaquette)) > tol:
        return False
    line1 = w1.sum(axis=0)
    line2 = w2.sum(axis=1)
    return bool(max(np.max(np.abs(line1)), np.max(np.abs(line2))) <= tol)


# --- assembled sparse stencils ------------------------------------------------

def _shift_matrix(L: int) -> sp.csr_matrix:
    """``(S f)(i) = f(i + 1 mod L)``."""
    rows = np.arange(L)
    return sp.csr_matrix((np.ones(L), (rows, (rows + 1) % L)), shape=(L, L))


def difference_matrix(shape: tuple[int, ...], axis: int) -> sp.csr_matrix:
    """Sparse forward difference along ``axis`` on a row-major periodic grid."""
    mats = []
    for k, L in enumerate(shape):
        if k == axis % len(shape):
            mats.append(_shift_matrix(L) - sp.identity(L, format="csr"))
        else:
            mats.append(sp.identity(L, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out.tocsr()


def gradient_matrix(shape: tuple[int, ...], axes=None) -> sp.csr_matrix:
    """Stacked forward differences, shape ``(len(axes) * n, n)``.

    Row blocks follow the order of ``axes``; within a block rows are sites in
    row-major order, matching ``grad(phi).reshape(-1)``.
    """
    axes = range(len(shape)) if axes is None else axes
    return sp.vstack([difference_matrix(shape, a) for a in axes]).tocsr()
