"""Neumann-series solvers for the quenched one- and two-variable elliptic problems.

The coefficient field is frozen at ``V''(grad phi)`` for one configuration
``phi``.  The field-space operator that would act on functions of ``phi`` is
replaced by a scalar spectral parameter ``rho_s >= 0`` (``rho_s`` stands for
its eigenvalue divided by ``Lam``).  Writing ``V'' = Lam (I - b)`` the
problems become

one variable, for ``u = grad Phi``::

    [Lam rho_s + grad* V'' grad + m^2] Phi = grad* h
    u = Lam^{-1} T h + T[b u],      T = grad [rho_s + grad* grad + m^2/Lam]^{-1} grad*

two variables, for ``Psi_1, Psi_2`` on ``Q x Q`` with ``A = rho_s + grad_y* grad_y
+ grad_z* grad_z + 2 m^2 / Lam``::

    Psi_1 = A^{-1}[Lam^{-1} grad_y* Phi + grad_y* b(y) grad_y (Psi_1 + Psi_2)]
    Psi_2 = A^{-1}[grad_z* b(z) grad_z (Psi_1 + Psi_2)]

Applying ``grad_y grad_z`` maps the second iteration exactly onto the block
fixed point for ``U_j = grad_y grad_z Psi_j``::

    U_1 = Lam^{-1} T_1 grad_z Phi + T_1 b(y)(U_1 + U_2)
    U_2 =                          T_2 b(z)(U_1 + U_2)

``U`` arrays have shape ``(d, d, *Q, *Q)``; the first index is the
``y``-derivative and the second the ``z``-derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .calculus import div_star, grad, gradient_matrix
from .errors import DomainError, ResourceError, ShapeError
from .greens import TWO_POINT_MAX_SITES, apply_T, make_T, make_T1, make_T2, resolvent_apply
from .potential import Potential, QuadraticPotential
from .torus import TorusLattice

FIT_WINDOW = 10
DIVERGENCE_FACTOR = 1e8
DIRECT_SOLVE_MAX_UNKNOWNS = 20000


@dataclass
class QuenchedProblem:
    """A frozen-coefficient problem.

    ``rhs`` is a vector field ``(d, *Q)`` for the one-variable problem, or a
    two-point ``y``-vector field ``(d, *Q, *Q)`` for the two-variable problem.
    """

    lat: TorusLattice
    V: Potential
    phi: np.ndarray
    rho_s: float
    m: float
    rhs: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.phi.shape != self.lat.shape:
            raise ShapeError(f"phi must have shape {self.lat.shape}, got {self.phi.shape}")
        if self.V.d != self.lat.d:
            raise DomainError("potential and lattice dimensions differ")
        if self.rho_s < 0 or self.m < 0 or not self.rho_s + self.m**2 > 0:
            raise DomainError("need rho_s >= 0, m >= 0 and rho_s + m^2 > 0")
        b = self.b_field
        mats = np.moveaxis(b, (0, 1), (-2, -1)).reshape(-1, self.lat.d, self.lat.d)
        eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
        if eig.min() < -1e-12 or eig.max() > 1 - self.V.ratio + 1e-12:
            raise DomainError("b(grad phi) leaves [0, 1 - lam/Lam]; potential constants are wrong")

    @property
    def two_variable(self) -> bool:
        return self.rhs.ndim == 1 + 2 * self.lat.d

    @property
    def grad_phi(self) -> np.ndarray:
        return grad(self.phi, d=self.lat.d)

    @property
    def b_field(self) -> np.ndarray:
        return self.V.contraction(self.grad_phi)

    @property
    def hessian_field(self) -> np.ndarray:
        return self.V.hessian(self.grad_phi)


@dataclass
class NeumannReport:
    """Outcome of a Neumann iteration.

    ``iterates`` holds the relative residual of the explicit quenched operator
    after each step and ``increments`` the norm of each step's change.
    """

    iterates: list[float]
    increments: list[float]
    ratio: float
    converged: bool
    solution: np.ndarray
    iterations: int
    flags: list[str] = field(default_factory=list)
    potential_field: np.ndarray | None = None  # Phi (one variable) or (Psi_1, Psi_2)

    @property
    def final_residual(self) -> float:
        return self.iterates[-1] if self.iterates else float("nan")


def fitted_ratio(increments, window: int = FIT_WINDOW) -> float:
    """``exp`` of the least-squares slope of ``log`` increments over the last ``window``.

    The first increment (from the zero start) is excluded.  Zero increments
    mean exact convergence and give ratio 0.
    """
    inc = np.asarray(increments[1:], dtype=float)
    if inc.size == 0 or np.all(inc == 0):
        return 0.0
    inc = inc[-window:]
    inc = inc[inc > 0]
    if inc.size < 2:
        return 0.0
    n = np.arange(inc.size, dtype=float)
    slope = np.polyfit(n, np.log(inc), 1)[0]
    return float(np.exp(slope))


def _matmul_field(b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sitewise ``b(x) u(x)`` for ``b`` of shape ``(d, d, *S)`` and ``u`` of ``(d, *P, *S)``.

    Axes of ``u`` between the component axis and the trailing ``b.ndim - 2``
    site axes are passengers.
    """
    extra = u.ndim - 1 - (b.ndim - 2)
    bb = b.reshape(b.shape[:2] + (1,) * extra + b.shape[2:])
    return np.einsum("ij...,j...->i...", bb, u)


# --- one variable --------------------------------------------------------------

def one_variable_operator(p: QuenchedProblem, Phi: np.ndarray) -> np.ndarray:
    """``[Lam rho_s + grad* V'' grad + m^2] Phi`` by stencils."""
    d = p.lat.d
    flux = _matmul_field(p.hessian_field, grad(Phi, d=d))
    return (p.V.Lam * p.rho_s + p.m**2) * Phi + div_star(flux, d=d)


def solve_one_variable(p: QuenchedProblem, tol: float = 1e-10, max_iter: int = 500) -> NeumannReport:
    """Neumann iteration ``u <- Lam^{-1} T rhs + T[b u]``.

    Converged means the relative residual of the explicit operator applied to
    ``Phi`` (with ``grad Phi = u``) is below ``tol``.
    """
    if p.two_variable or p.rhs.shape != (p.lat.d,) + p.lat.shape:
        raise ShapeError("one-variable problems need a vector-field rhs of shape (d, *Q)")
    if not tol > 0:
        raise DomainError("tol must be positive")
    Lam, d = p.V.Lam, p.lat.d
    shift = p.rho_s + p.m**2 / Lam
    T = make_T(p.lat, shift)
    b = p.b_field
    target = div_star(p.rhs, d=d)
    scale = np.linalg.norm(target) or 1.0
    u = np.zeros_like(p.rhs)
    residuals, increments = [], []
    Phi = np.zeros(p.lat.shape)
    flags = []
    converged = False
    n = 0
    for n in range(1, max_iter + 1):
        source = p.rhs / Lam + _matmul_field(b, u)
        u_new = apply_T(T, source)
        Phi = resolvent_apply(div_star(source, d=d), p.lat.shape, 1.0, shift)
        increments.append(float(np.linalg.norm(u_new - u)))
        u = u_new
        res = float(np.linalg.norm(one_variable_operator(p, Phi) - target) / scale)
        residuals.append(res)
        if res < tol:
            converged = True
            break
        if not np.isfinite(res) or increments[-1] > DIVERGENCE_FACTOR * max(increments[0], 1e-300):
            flags.append("diverged")
            break
    ratio = fitted_ratio(increments)
    if not converged and "diverged" not in flags:
        flags.append("max_iter exhausted")
    return NeumannReport(residuals, increments, ratio, converged, u, n, flags, Phi)


def one_variable_matrix(p: QuenchedProblem) -> sp.csr_matrix:
    """Assembled sparse ``Lam rho_s + grad* V'' grad + m^2``."""
    d, N = p.lat.d, p.lat.N
    G = gradient_matrix(p.lat.shape)
    H = p.hessian_field.reshape(d, d, N)
    Hs = sp.bmat([[sp.diags(H[i, j]) for j in range(d)] for i in range(d)], format="csr")
    return (G.T @ Hs @ G + (p.V.Lam * p.rho_s + p.m**2) * sp.identity(N)).tocsr()


def direct_solve_one_variable(p: QuenchedProblem) -> np.ndarray:
    """Sparse direct solution of the one-variable problem; returns ``grad Phi``."""
    if p.lat.N > DIRECT_SOLVE_MAX_UNKNOWNS:
        raise ResourceError("direct solve is reserved for small lattices")
    G = gradient_matrix(p.lat.shape)
    Phi = spla.spsolve(one_variable_matrix(p).tocsc(), G.T @ p.rhs.reshape(-1))
    return grad(Phi.reshape(p.lat.shape), d=p.lat.d)


# --- two variables ------------------------------------------------------------

def _axes(d):
    return tuple(range(-2 * d, -d)), tuple(range(-d, 0))


def mixed_gradient(Psi: np.ndarray, d: int) -> np.ndarray:
    """``U[a, b] = grad_{y,a} grad_{z,b} Psi`` with shape ``(d, d, *Q, *Q)``."""
    ya, za = _axes(d)
    return grad(grad(Psi, axes=za), axes=ya)


def _lift_b(b: np.ndarray, d: int, variable: str) -> np.ndarray:
    """Broadcast ``b(grad phi(.))`` on ``Q`` to ``Q x Q`` as a function of ``y`` or ``z``."""
    if variable == "y":
        return b.reshape(b.shape + (1,) * d)
    return b.reshape(b.shape[:2] + (1,) * d + b.shape[2:])


def two_variable_operator(p: QuenchedProblem, Psi1: np.ndarray, Psi2: np.ndarray):
    """Both left-hand sides of the quenched two-variable system, by stencils."""
    d, Lam = p.lat.d, p.V.Lam
    ya, za = _axes(d)
    Hy = _lift_b(p.hessian_field, d, "y")
    Hz = _lift_b(p.hessian_field, d, "z")
    by = _lift_b(p.b_field, d, "y")
    bz = _lift_b(p.b_field, d, "z")
    shift = Lam * p.rho_s + 2 * p.m**2

    def lap(f, axes):
        return div_star(grad(f, axes=axes), axes=axes)

    def flux(coef, f, axes):
        return div_star(np.einsum("ij...,j...->i...", coef, grad(f, axes=axes)), axes=axes)

    r1 = shift * Psi1 + flux(Hy, Psi1, ya) + Lam * lap(Psi1, za) - Lam * flux(by, Psi2, ya)
    r2 = shift * Psi2 + flux(Hz, Psi2, za) + Lam * lap(Psi2, ya) - Lam * flux(bz, Psi1, za)
    return r1, r2


def _check_two_variable(p: QuenchedProblem):
    d = p.lat.d
    if p.rhs.shape != (d,) + p.lat.shape * 2:
        raise ShapeError(f"two-variable rhs must have shape {(d,) + p.lat.shape * 2}, got {p.rhs.shape}")
    if p.lat.N > TWO_POINT_MAX_SITES:
        raise ResourceError(f"two-point problems are capped at {TWO_POINT_MAX_SITES} sites per factor")


def solve_two_variable(p: QuenchedProblem, tol: float = 1e-10, max_iter: int = 500) -> NeumannReport:
    """Neumann iteration for the symmetric two-variable block system.

    The solution is ``U`` of shape ``(2, d, d, *Q, *Q)`` holding
    ``grad_y grad_z Psi_1`` and ``grad_y grad_z Psi_2``.  The ratio is fitted to
    the increments of ``U``.  The flag ``"threshold violated"`` is set whenever
    ``lam/Lam <= 1/2``, where the coupling may fail to contract.
    """
    _check_two_variable(p)
    if not tol > 0:
        raise DomainError("tol must be positive")
    d, Lam = p.lat.d, p.V.Lam
    grid = p.lat.shape * 2
    ya, za = _axes(d)
    shift = p.rho_s + 2 * p.m**2 / Lam
    by = _lift_b(p.b_field, d, "y")
    bz = _lift_b(p.b_field, d, "z")
    src1 = div_star(p.rhs, axes=ya) / Lam
    scale = np.linalg.norm(src1) * Lam or 1.0

    Psi1 = np.zeros(grid)
    Psi2 = np.zeros(grid)
    U = np.zeros((2, d, d) + grid)
    residuals, increments, flags = [], [], []
    if p.V.ratio <= 0.5:
        flags.append("threshold violated")
    converged = False
    n = 0
    for n in range(1, max_iter + 1):
        S = Psi1 + Psi2
        gy = grad(S, axes=ya)
        gz = grad(S, axes=za)
        Psi1 = resolvent_apply(src1 + div_star(np.einsum("ij...,j...->i...", by, gy), axes=ya), grid, 1.0, shift)
        Psi2 = resolvent_apply(div_star(np.einsum("ij...,j...->i...", bz, gz), axes=za), grid, 1.0, shift)
        U_new = np.stack([mixed_gradient(Psi1, d), mixed_gradient(Psi2, d)])
        increments.append(float(np.linalg.norm(U_new - U)))
        U = U_new
        r1, r2 = two_variable_operator(p, Psi1, Psi2)
        r1 = r1 - Lam * src1
        res = float(np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2) / scale)
        residuals.append(res)
        if res < tol:
            converged = True
            break
        if not np.isfinite(res) or increments[-1] > DIVERGENCE_FACTOR * max(increments[0], 1e-300):
            flags.append("diverged")
            break
    ratio = fitted_ratio(increments)
    if len(increments) > FIT_WINDOW and (ratio >= 1 or increments[-1] > increments[-FIT_WINDOW]):
        if "diverged" not in flags:
            flags.append("diverged")
    if not converged and "diverged" not in flags:
        flags.append("max_iter exhausted")
    return NeumannReport(residuals, increments, ratio, converged, U, n, flags, np.stack([Psi1, Psi2]))


def block_fixed_point_residual(p: QuenchedProblem, U: np.ndarray) -> float:
    """Relative residual of ``U`` in the ``T_1, T_2`` block fixed-point equation."""
    d, Lam = p.lat.d, p.V.Lam
    shift = p.rho_s + 2 * p.m**2 / Lam
    T1, T2 = make_T1(p.lat, shift), make_T2(p.lat, shift)
    ya, za = _axes(d)
    F = np.swapaxes(grad(p.rhs, axes=za), 0, 1)  # F[a, b] = grad_{z,b} Phi_a
    by = _lift_b(p.b_field, d, "y")
    bz = _lift_b(p.b_field, d, "z")
    W = U[0] + U[1]
    rhs1 = T1.apply(F / Lam + np.einsum("ij...,j...->i...", by, W))
    BzW = np.einsum("ij...,aj...->ai...", bz, W)  # b(z) acts on the z index
    rhs2 = np.swapaxes(T2.apply(np.swapaxes(BzW, 0, 1)), 0, 1)
    num = np.sqrt(np.linalg.norm(U[0] - rhs1) ** 2 + np.linalg.norm(U[1] - rhs2) ** 2)
    den = np.linalg.norm(rhs1) + np.linalg.norm(rhs2)
    return float(num / den) if den > 0 else float(num)


def two_variable_matrix(p: QuenchedProblem) -> sp.csr_matrix:
    """Assembled sparse two-variable system acting on ``(Psi_1, Psi_2)``."""
    d, N, Lam = p.lat.d, p.lat.N, p.V.Lam
    grid = p.lat.shape * 2
    Gy = gradient_matrix(grid, axes=range(d))
    Gz = gradient_matrix(grid, axes=range(d, 2 * d))
    ones = np.ones(N)

    def blocks(field, variable):
        f = field.reshape(d, d, N)
        mk = (lambda v: np.kron(v, ones)) if variable == "y" else (lambda v: np.kron(ones, v))
        return sp.bmat([[sp.diags(mk(f[i, j])) for j in range(d)] for i in range(d)], format="csr")

    H, b = p.hessian_field, p.b_field
    I = sp.identity(N * N, format="csr")
    shift = Lam * p.rho_s + 2 * p.m**2
    A11 = shift * I + Gy.T @ blocks(H, "y") @ Gy + Lam * (Gz.T @ Gz)
    A12 = -Lam * (Gy.T @ blocks(b, "y") @ Gy)
    A22 = shift * I + Gz.T @ blocks(H, "z") @ Gz + Lam * (Gy.T @ Gy)
    A21 = -Lam * (Gz.T @ blocks(b, "z") @ Gz)
    return sp.bmat([[A11, A12], [A21, A22]], format="csr")


def direct_solve_two_variable(p: QuenchedProblem) -> np.ndarray:
    """Sparse direct solution; returns ``U`` like :func:`solve_two_variable`."""
    _check_two_variable(p)
    d = p.lat.d
    n = p.lat.N**2
    if 2 * n > DIRECT_SOLVE_MAX_UNKNOWNS:
        raise ResourceError("direct two-variable solve is reserved for L <= 8 in d=2")
    grid = p.lat.shape * 2
    Gy = gradient_matrix(grid, axes=range(d))
    rhs = np.concatenate([Gy.T @ p.rhs.reshape(-1), np.zeros(n)])
    sol = spla.spsolve(two_variable_matrix(p).tocsc(), rhs)
    Psi1, Psi2 = sol[:n].reshape(grid), sol[n:].reshape(grid)
    return np.stack([mixed_gradient(Psi1, d), mixed_gradient(Psi2, d)])


@dataclass
class X2Report:
    solution_norm: float
    rhs_norm: float          # || grad_z Phi ||
    bound: float             # || grad_z Phi || / (2 lam - Lam)
    observed_ratio: float    # solution_norm * (2 lam - Lam) / rhs_norm; <= 1 when the bound holds
    raw_ratio: float         # solution_norm / rhs_norm
    holds: bool
    converged: bool


def verify_x2_bound(p: QuenchedProblem, slack: float = 1e-8, tol: float = 1e-11,
                    max_iter: int = 1000) -> X2Report:
    """Check ``||(U_1, U_2)|| <= ||grad_z Phi|| / (2 lam - Lam)`` for a quenched problem."""
    lam, Lam = p.V.lam, p.V.Lam
    if not 2 * lam > Lam:
        raise DomainError(f"the bound needs lam/Lam > 1/2, got {p.V.ratio:.4f}")
    _check_two_variable(p)
    d = p.lat.d
    F = grad(p.rhs, axes=_axes(d)[1])
    fn = float(np.linalg.norm(F))
    if fn == 0:
        return X2Report(0.0, 0.0, 0.0, 0.0, 0.0, True, True)
    rep = solve_two_variable(p, tol=tol, max_iter=max_iter)
    if not rep.converged:
        raise DomainError("two-variable iteration did not converge")
    un = float(np.linalg.norm(rep.solution))
    bound = fn / (2 * lam - Lam)
    return X2Report(un, fn, bound, un / bound, un / fn, un <= bound * (1 + slack), True)


def cumulant_bound_constant(lam: float, Lam: float) -> float:
    """Explicit constant in the third-moment bound assembled from the quadratic-form chain.

    ``|<G_1 G_2 G_3>| <= M C ||h_1|| ||h_2|| ||h_3||`` with ``C = 2 / (lam^2 (2 lam - Lam))``.
    """
    if not 2 * lam > Lam:
        raise DomainError("constant defined only for lam/Lam > 1/2")
    return 2.0 / (lam**2 * (2 * lam - Lam))


# --- Gaussian Helffer-Sjostrand check -------------------------------------------

@dataclass
class HSReport:
    multiplier: float   # (f, [c grad* grad + m^2]^{-1} g) by FFT
    sparse: float       # same resolvent by sparse direct solve
    dense: float        # f^T Cov g with Cov the inverse precision matrix
    max_discrepancy: float


def gaussian_hs_check(lat: TorusLattice, c: float, m: float, f: np.ndarray, g: np.ndarray) -> HSReport:
    """Gaussian covariance of ``(f, phi)`` and ``(g, phi)`` by three independent routes.

    For ``V = c|z|^2/2`` the Helffer-Sjostrand representation of the covariance
    of two linear functionals reduces to the resolvent ``[c grad* grad + m^2]^{-1}``
    because the field-space Laplacian annihilates the constant field derivatives.
    """
    QuadraticPotential(c, lat.d)
    if not m > 0:
        raise DomainError("mass must be positive")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != lat.shape or g.shape != lat.shape:
        raise ShapeError("observables must be scalar fields on the lattice")
    scale = max(np.abs(f).sum(), np.abs(g).sum(), 1.0)
    if abs(f.sum()) > 1e-12 * scale or abs(g.sum()) > 1e-12 * scale:
        raise DomainError("observables must have mean zero")
    v1 = float(np.vdot(f, resolvent_apply(g, lat.shape, c, m**2)))
    G = gradient_matrix(lat.shape)
    P = (c * (G.T @ G) + m**2 * sp.identity(lat.N)).tocsc()
    v2 = float(f.reshape(-1) @ spla.spsolve(P, g.reshape(-1)))
    if lat.N <= 4096:
        v3 = float(f.reshape(-1) @ np.linalg.inv(P.toarray()) @ g.reshape(-1))
    else:
        v3 = v2
    disc = max(abs(v1 - v2), abs(v1 - v3), abs(v2 - v3))
    return HSReport(v1, v2, v3, disc)


def random_configuration(lat: TorusLattice, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """White-noise field, an adversarial coefficient-generating configuration."""
    return scale * np.random.default_rng(seed).standard_normal(lat.shape)
