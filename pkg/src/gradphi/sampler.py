"""Metropolis-adjusted Langevin sampling of the massive torus measure and its tilt.

The target density on fields ``phi : Q -> R`` is ::

    exp[-sum_y V(grad phi(y)) - (m^2/2) sum_y phi(y)^2 + mu (phi(0) - phi(x))]

It is split into a Gaussian reference ``N(0, C)`` with
``C = [kappa grad* grad + m^2]^{-1}`` and ``kappa = (lam + Lam)/2``, and a
remainder ::

    R(phi) = sum_y [V(grad phi) - kappa |grad phi|^2 / 2] - mu (phi(0) - phi(x)).

Moves use the preconditioned Crank-Nicolson Langevin proposal ::

    v = [(2 - delta) u - 2 delta C DR(u) + sqrt(8 delta) C^{1/2} xi] / (2 + delta)

followed by a Metropolis-Hastings accept/reject, so the chain targets the
measure exactly.  The reference Gaussian is applied by FFT.  For a quadratic
``V`` the remainder is linear, every proposal is accepted and ``delta = 2``
gives independent exact draws.

Each chain owns a PCG64 stream spawned from the seed, and all chains advance
in lockstep as one batched array.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .calculus import div_star, grad
from .errors import DomainError, SamplingError
from .greens import resolvent_apply, spectral_laplacian
from .potential import Potential
from .stats import block_units, effective_sample_size, jackknife_function, split_rhat
from .torus import TorusLattice, translate

TARGET_ACCEPT = 0.55
MAX_STEP = 2.0
MIN_STEP = 1e-8
RHAT_THRESHOLD = 1.05
MIN_RECORDS = 100
CHECKPOINT_MAGIC = b"GPHICKPT"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sI32sIQ")
_CHAIN = struct.Struct("<Q16s16sIId")


@dataclass
class ModelSpec:
    """The measure to sample: lattice, potential, mass and tilt ``mu (phi(0) - phi(x))``."""

    lat: TorusLattice
    V: Potential
    m: float
    mu: float = 0.0
    x: tuple | None = None

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError(f"the finite-volume measure needs m > 0, got {self.m}")
        if self.V.d != self.lat.d:
            raise DomainError("potential and lattice dimensions differ")
        if self.x is not None:
            self.x = self.lat.canonical(self.x)
        if self.mu != 0 and (self.x is None or not any(self.x)):
            raise DomainError("a nonzero tilt needs a tilt site x != 0")

    def params(self) -> dict:
        return {"d": self.lat.d, "L": self.lat.L, "V": self.V.params(), "m": float(self.m),
                "mu": float(self.mu), "x": list(self.x) if self.x is not None else None}

    def digest(self) -> bytes:
        """SHA-256 of the canonical parameter JSON; stored in checkpoints."""
        return hashlib.sha256(json.dumps(self.params(), sort_keys=True).encode()).digest()


@dataclass
class ChainEnsemble:
    """Recorded output of :func:`sample`.

    ``records`` maps observable names to arrays with leading axes
    ``(n_chains, n_records)``:

    ``"X"``       ``phi(0) - phi(x_k)`` for each observed displacement ``x_k``;
    ``"Xpow"``    translation averages ``mean_y (phi(y) - phi(y + x_k))^p``, ``p = 1..4``;
    ``"energy"``  ``-log`` of the unnormalized density;
    ``"omega"``   selected gradient components;
    ``"linear"``  ``(h_j, grad phi)`` for the requested ``h_j``;
    ``"stein"``   ``(DR(phi), b_k)`` with ``b_k`` from :func:`stein_direction`;
    ``"fields"``  full configurations, when retained.
    """

    spec: ModelSpec
    seed: int
    n_chains: int
    n_steps: int
    burn_in: int
    thin: int
    step_size: np.ndarray
    acceptance: np.ndarray
    burn_in_acceptance: np.ndarray
    displacements: list
    records: dict = field(repr=False)
    linear_h: list = field(default_factory=list, repr=False)
    omega_sites: list = field(default_factory=list)
    final_fields: np.ndarray | None = field(default=None, repr=False)
    rng_states: list = field(default_factory=list, repr=False)

    @property
    def n_records(self) -> int:
        return self.records["energy"].shape[1]

    def X(self, x) -> np.ndarray:
        """``(n_chains, n_records)`` stream of ``phi(0) - phi(x)``."""
        return self.records["X"][:, :, self._disp_index(x)]

    def Xpow(self, x) -> np.ndarray:
        return self.records["Xpow"][:, :, self._disp_index(x)]

    def _disp_index(self, x):
        x = self.spec.lat.canonical(x)
        try:
            return self.displacements.index(x)
        except ValueError:
            raise DomainError(f"displacement {x} was not recorded; recorded: {self.displacements}") from None


class _Kernel:
    """Batched target pieces for fields of shape ``(n_chains, *shape)``."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        lat, V = spec.lat, spec.V
        self.d = lat.d
        self.shape = lat.shape
        self.axes = lat.axes
        self.kappa = 0.5 * (V.lam + V.Lam)
        sym = 1.0 / (self.kappa * spectral_laplacian(lat.shape) + spec.m**2)
        self.c_sym = sym
        self.sqrt_c = np.sqrt(sym)
        self.tilt = np.zeros(lat.shape)
        if spec.mu != 0:
            self.tilt[(0,) * lat.d] += 1.0
            self.tilt[lat.index(spec.x)] -= 1.0

    def C(self, f):
        return sfft.irfftn(sfft.rfftn(f, axes=self.axes) * self.c_sym, s=self.shape, axes=self.axes)

    def C_half(self, xi):
        return sfft.irfftn(sfft.rfftn(xi, axes=self.axes) * self.sqrt_c, s=self.shape, axes=self.axes)

    def _sum(self, a):
        return a.reshape(a.shape[0], -1).sum(axis=1)

    def remainder(self, u):
        """``R(u)``, ``DR(u)`` and the energy ``-log density`` per chain."""
        V, mu = self.spec.V, self.spec.mu
        gu = grad(u, d=self.d)
        grad_sq = 0.5 * self.kappa * self._sum((gu * gu).sum(axis=0))
        val = self._sum(V.value(gu)) - grad_sq
        force = div_star(V.gradient(gu) - self.kappa * gu, d=self.d)
        if mu != 0:
            val = val - mu * self._sum(u * self.tilt)
            force = force - mu * self.tilt
        return val, force, val + grad_sq + 0.5 * self.spec.m**2 * self._sum(u * u)

    def energy(self, u):
        V, m, mu = self.spec.V, self.spec.m, self.spec.mu
        e = self._sum(V.value(grad(u, d=self.d))) + 0.5 * m**2 * self._sum(u**2)
        if mu != 0:
            e = e - mu * self._sum(u * self.tilt)
        return e


def _dot(a, b):
    return (a * b).reshape(a.shape[0], -1).sum(axis=1)


def _adapt_gain(t: int) -> float:
    return 1.0 / (t + 10.0) ** 0.6


def stein_direction(spec: ModelSpec, x):
    """``b = C (delta_0 - delta_x)`` and ``s2 = (delta_0 - delta_x, b)`` for the reference covariance ``C``.

    With ``Z = (DR(phi), b)`` recorded, ``psi = X^k`` gives the mean-zero
    control variates ``k(k-1) s2 X^(k-2) - k X^(k-1) (X + Z)``; see
    :func:`gradphi.cumulants.control_variate_cumulants`.
    """
    lat = spec.lat
    x = lat.canonical(x)
    ker = _Kernel(spec)
    b = ker.C((lat.delta() - lat.delta(x))[None])[0]
    return b, float(b[(0,) * lat.d] - b[lat.index(x)])


class _RecordBuffer:
    def __init__(self, spec, n_chains, n_records, displacements, omega_sites, linear_h, keep_fields):
        self.spec = spec
        self.disp = displacements
        self.stein_b = [stein_direction(spec, x)[0] for x in displacements]
        self.omega_sites = omega_sites
        self.linear_h = linear_h
        lat = spec.lat
        self.data = {
            "X": np.zeros((n_chains, n_records, len(displacements))),
            "Xpow": np.zeros((n_chains, n_records, len(displacements), 4)),
            "energy": np.zeros((n_chains, n_records)),
            "omega": np.zeros((n_chains, n_records, len(omega_sites))),
            "linear": np.zeros((n_chains, n_records, len(linear_h))),
            "stein": np.zeros((n_chains, n_records, len(displacements))),
        }
        if keep_fields:
            self.data["fields"] = np.zeros((n_chains, n_records) + lat.shape)
        self.k = 0

    def record(self, u, energy, force):
        lat, k = self.spec.lat, self.k
        origin = (slice(None),) + (0,) * lat.d
        for j, x in enumerate(self.disp):
            self.data["X"][:, k, j] = u[origin] - u[(slice(None),) + lat.index(x)]
            self.data["stein"][:, k, j] = _dot(force, np.broadcast_to(self.stein_b[j], force.shape))
            Y = u - translate(lat, u, x)
            Y = Y.reshape(Y.shape[0], -1)
            Y2 = Y * Y
            for p, Yp in enumerate((Y, Y2, Y2 * Y, Y2 * Y2)):
                self.data["Xpow"][:, k, j, p] = Yp.mean(axis=1)
        self.data["energy"][:, k] = energy
        if self.omega_sites or self.linear_h:
            gu = grad(u, d=lat.d)
            for j, (comp, site) in enumerate(self.omega_sites):
                self.data["omega"][:, k, j] = gu[(comp, slice(None)) + lat.index(site)]
            for j, h in enumerate(self.linear_h):
                self.data["linear"][:, k, j] = _dot(np.moveaxis(gu, 0, 1), np.broadcast_to(h, (u.shape[0],) + h.shape))
        if "fields" in self.data:
            self.data["fields"][:, k] = u
        self.k += 1


def sample(spec: ModelSpec, n_chains: int, n_steps: int, seed: int, *, burn_in: int | None = None,
           thin: int = 1, displacements=None, omega_sites=(), linear=(), keep_fields: bool = False,
           init: str = "zero", step_size: float = 1.0, target_accept: float = TARGET_ACCEPT,
           checkpoint: str | None = None, checkpoint_at: int | None = None,
           resume: str | None = None) -> ChainEnsemble:
    """Run ``n_chains`` pCN-Langevin chains for ``n_steps`` total steps each.

    The step size of each chain is adapted by a Robbins-Monro rule toward
    ``target_accept`` during the first ``burn_in`` steps (default
    ``n_steps // 5``) and frozen afterwards.  Observables are recorded every
    ``thin`` steps after burn-in.

    ``init="dispersed"`` starts each chain from twice a reference-Gaussian draw.
    With ``checkpoint`` and ``checkpoint_at`` the chain state after step
    ``checkpoint_at`` is written there; ``resume`` continues from such a file
    and reproduces the uninterrupted run exactly.
    """
    if n_chains < 2:
        raise DomainError("at least two chains are needed for convergence diagnostics")
    if n_steps < 1 or thin < 1:
        raise DomainError("n_steps and thin must be positive")
    burn_in = n_steps // 5 if burn_in is None else int(burn_in)
    if not 0 <= burn_in < n_steps:
        raise DomainError("burn_in must lie in [0, n_steps)")
    lat = spec.lat
    if displacements is None:
        displacements = [spec.x] if spec.x is not None else [lat.axis_site(1)]
    displacements = [lat.canonical(x) for x in displacements]
    omega_sites = [(int(c), lat.canonical(s)) for c, s in omega_sites]
    linear_h = [np.asarray(h, dtype=float) for h in linear]
    for h in linear_h:
        if h.shape != (lat.d,) + lat.shape:
            raise DomainError("linear functionals need vector fields of shape (d, *Q)")

    ker = _Kernel(spec)
    delta_cap = MAX_STEP
    if resume is not None:
        start, rngs, delta, u = load_checkpoint(resume, spec, n_chains)
    else:
        start = 0
        rngs = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n_chains)]
        delta = np.full(n_chains, min(float(step_size), delta_cap))
        u = np.zeros((n_chains,) + lat.shape)
        if init == "dispersed":
            xi = np.stack([r.standard_normal(lat.shape) for r in rngs])
            u = 2.0 * ker.C_half(xi)
        elif init != "zero":
            raise DomainError(f"unknown init {init!r}")

    record_steps = [t for t in range(burn_in, n_steps) if (t - burn_in) % thin == thin - 1]
    first = sum(1 for t in record_steps if t < start)
    buf = _RecordBuffer(spec, n_chains, len(record_steps) - first, displacements, omega_sites,
                        linear_h, keep_fields)
    acc_sum = np.zeros(n_chains)
    acc_burn = np.zeros(n_chains)
    n_post = 0

    R_u, g_u, e_u = ker.remainder(u)
    Cg_u = ker.C(g_u)
    gCg_u = _dot(g_u, Cg_u)
    record_set = set(record_steps)
    for t in range(start, n_steps):
        xi = np.stack([r.standard_normal(lat.shape) for r in rngs])
        unif = np.array([r.random() for r in rngs])
        dl = delta.reshape((-1,) + (1,) * lat.d)
        v = ((2 - dl) * u - 2 * dl * Cg_u + np.sqrt(8 * dl) * ker.C_half(xi)) / (2 + dl)
        R_v, g_v, e_v = ker.remainder(v)
        Cg_v = ker.C(g_v)
        gCg_v = _dot(g_v, Cg_v)
        log_a = (R_u - R_v
                 - 0.25 * (_dot((2 + dl) * u - (2 - dl) * v, g_v) - _dot((2 + dl) * v - (2 - dl) * u, g_u))
                 - 0.25 * delta * (gCg_v - gCg_u))
        if not np.all(np.isfinite(R_v)):
            bad = int(np.flatnonzero(~np.isfinite(R_v))[0])
            raise SamplingError(f"non-finite energy in chain {bad} at step {t} (step size {delta[bad]:.3g})")
        alpha = np.exp(np.minimum(log_a, 0.0))
        accept = unif < alpha
        if np.any(accept):
            sel = accept
            u = np.where(sel.reshape(dl.shape), v, u)
            R_u = np.where(sel, R_v, R_u)
            g_u = np.where(sel.reshape(dl.shape), g_v, g_u)
            Cg_u = np.where(sel.reshape(dl.shape), Cg_v, Cg_u)
            gCg_u = np.where(sel, gCg_v, gCg_u)
            e_u = np.where(sel, e_v, e_u)
        if t < burn_in:
            acc_burn += alpha
            delta = np.clip(delta * np.exp(_adapt_gain(t) * (alpha - target_accept)), MIN_STEP, delta_cap)
        else:
            acc_sum += alpha
            n_post += 1
        if t in record_set:
            buf.record(u, e_u, g_u)
        if checkpoint is not None and checkpoint_at is not None and t + 1 == checkpoint_at:
            save_checkpoint(checkpoint, spec, t + 1, rngs, delta, u)

    n_burn = max(burn_in - start, 0)
    return ChainEnsemble(
        spec=spec, seed=seed, n_chains=n_chains, n_steps=n_steps, burn_in=burn_in, thin=thin,
        step_size=delta, acceptance=acc_sum / max(n_post, 1),
        burn_in_acceptance=acc_burn / max(n_burn, 1), displacements=displacements,
        records=buf.data, linear_h=linear_h, omega_sites=omega_sites, final_fields=u,
        rng_states=[r.bit_generator.state for r in rngs])


# --- one dimension: increment moves ------------------------------------------------

def _zero_mean_energy(eta, m):
    """``(m^2/2) sum (psi - mean psi)^2`` with ``psi`` the partial sums of ``eta``."""
    psi = np.cumsum(eta, axis=1) - eta
    psi = psi - psi.mean(axis=1, keepdims=True)
    return 0.5 * m**2 * (psi * psi).sum(axis=1)


def sample_increments(spec: ModelSpec, n_chains: int, n_sweeps: int, seed: int, *, burn_in: int | None = None,
                      thin: int = 1, displacements=None, group: int = 8) -> ChainEnsemble:
    """Exact MCMC for ``d = 1`` in increment coordinates ``eta = grad phi``.

    Each sweep splits the increments into random groups of size ``group``
    using an affine permutation ``i -> a i + b (mod L)``.  A group keeps its
    sum, so ``sum eta = 0`` holds throughout, and its new values are drawn
    from the Gaussian conditional of the quadratic part ``kappa eta^2 / 2``
    plus the tilt, then accepted on the bounded remainder
    ``V - kappa eta^2 / 2``.  Group updates are reversible for the product
    part ``exp(-sum V(eta) + mu X)``; the mass term, with the zero mode
    integrated out, enters through one Metropolis-Hastings test per sweep.
    The zero mode is redrawn from its Gaussian conditional at each record.

    Increments are nearly independent, so unlike Langevin moves on ``phi`` the
    mixing time does not grow with ``L``.  ``acceptance`` in the result is the
    post-burn-in group acceptance rate; ``step_size`` is NaN because the
    proposal has no tunable scale.
    """
    lat, V, m, mu = spec.lat, spec.V, spec.m, spec.mu
    if lat.d != 1:
        raise DomainError("increment moves are implemented for d = 1 only")
    if n_chains < 2:
        raise DomainError("at least two chains are needed for convergence diagnostics")
    if n_sweeps < 1 or thin < 1:
        raise DomainError("n_sweeps and thin must be positive")
    burn_in = n_sweeps // 5 if burn_in is None else int(burn_in)
    if not 0 <= burn_in < n_sweeps:
        raise DomainError("burn_in must lie in [0, n_sweeps)")
    L = lat.L
    if group < 2 or L % group:
        raise DomainError(f"group size {group} must be at least 2 and divide L = {L}")
    kappa = 0.5 * (V.lam + V.Lam)
    if displacements is None:
        displacements = [spec.x] if spec.x is not None else [lat.axis_site(1)]
    displacements = [lat.canonical(x) for x in displacements]
    tilt = np.zeros(L)
    if mu != 0:
        # mu X = -mu * sum_{0 <= i < x} eta_i with x read as a forward displacement
        tilt[:spec.x[0] % L] = -mu

    def rem(z):
        return V.value(z[None]) - 0.5 * kappa * z * z

    ker = _Kernel(spec)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n_chains)]
    eta = np.zeros((n_chains, L))
    r_eta = rem(eta)
    E_m = _zero_mean_energy(eta, m)
    record_steps = [t for t in range(burn_in, n_sweeps) if (t - burn_in) % thin == thin - 1]
    buf = _RecordBuffer(spec, n_chains, len(record_steps), displacements, [], [], False)
    record_set = set(record_steps)
    n_groups = L // group
    units = np.array([a for a in range(1, L) if np.gcd(a, L) == 1])
    sites = np.arange(L)
    rows = np.arange(n_chains)[:, None, None]
    acc_sum = np.zeros(n_chains)
    acc_burn = np.zeros(n_chains)
    sd = 1.0 / np.sqrt(kappa)
    u = None
    for t in range(n_sweeps):
        ab = np.array([(r.integers(len(units)), r.integers(L)) for r in rngs])
        noise = np.stack([r.standard_normal(L) for r in rngs]).reshape(n_chains, n_groups, group)
        unif = np.stack([r.random(n_groups + 1) for r in rngs])
        idx = ((units[ab[:, 0], None] * sites + ab[:, 1, None]) % L).reshape(n_chains, n_groups, group)
        old = eta[rows, idx]
        tg = tilt[idx] / kappa
        noise -= noise.mean(axis=2, keepdims=True)
        new = tg + (old - tg).mean(axis=2, keepdims=True) + sd * noise
        r_old, r_new = r_eta[rows, idx], rem(new)
        ok = unif[:, :n_groups] < np.exp(np.minimum((r_old - r_new).sum(axis=2), 0.0))
        prop, prop_r = eta.copy(), r_eta.copy()
        prop[rows, idx] = np.where(ok[:, :, None], new, old)
        prop_r[rows, idx] = np.where(ok[:, :, None], r_new, r_old)
        E_p = _zero_mean_energy(prop, m)
        accept = unif[:, n_groups] < np.exp(np.minimum(E_m - E_p, 0.0))
        eta = np.where(accept[:, None], prop, eta)
        r_eta = np.where(accept[:, None], prop_r, r_eta)
        E_m = np.where(accept, E_p, E_m)
        rate = ok.mean(axis=1) * accept
        if t < burn_in:
            acc_burn += rate
        else:
            acc_sum += rate
        if t in record_set:
            psi = np.cumsum(eta, axis=1) - eta
            zero = np.array([r.standard_normal() for r in rngs]) / (m * np.sqrt(L)) - psi.mean(axis=1)
            u = psi + zero[:, None]
            energy = (r_eta + 0.5 * kappa * eta * eta).sum(axis=1) + 0.5 * m**2 * (u * u).sum(axis=1)
            if mu != 0:
                energy = energy - (tilt * eta).sum(axis=1)
            buf.record(u, energy, ker.remainder(u)[1])
    return ChainEnsemble(
        spec=spec, seed=seed, n_chains=n_chains, n_steps=n_sweeps, burn_in=burn_in, thin=thin,
        step_size=np.full(n_chains, np.nan), acceptance=acc_sum / max(n_sweeps - burn_in, 1),
        burn_in_acceptance=acc_burn / max(burn_in, 1), displacements=displacements,
        records=buf.data, final_fields=u, rng_states=[r.bit_generator.state for r in rngs])


# --- checkpoints ----------------------------------------------------------------

def _u128(v: int) -> bytes:
    return int(v).to_bytes(16, "little")


def save_checkpoint(path, spec: ModelSpec, step: int, rngs, delta, fields) -> None:
    """Write chain state.

    Layout, little-endian::

        header: magic[8] b"GPHICKPT", version u32, spec sha256[32], n_chains u32, N u64
        per chain: step u64, pcg64 state u128, pcg64 inc u128, has_uint32 u32,
                   uinteger u32, step size f64, field f64[N] (row-major)
    """
    fields = np.ascontiguousarray(fields, dtype="<f8")
    n_chains = fields.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, spec.digest(), n_chains, spec.lat.N))
        for c in range(n_chains):
            st = rngs[c].bit_generator.state
            fh.write(_CHAIN.pack(step, _u128(st["state"]["state"]), _u128(st["state"]["inc"]),
                                 st["has_uint32"], st["uinteger"], float(delta[c])))
            fh.write(fields[c].tobytes())


def load_checkpoint(path, spec: ModelSpec, n_chains: int | None = None):
    """Read a checkpoint written for ``spec``; returns ``(step, rngs, step_sizes, fields)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DomainError("checkpoint file is truncated")
    magic, version, digest, nc, N = _HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise DomainError("not a checkpoint file of this format")
    if digest != spec.digest():
        raise DomainError("checkpoint was written for a different model")
    if N != spec.lat.N or (n_chains is not None and nc != n_chains):
        raise DomainError("checkpoint size does not match the requested run")
    off = _HEADER.size
    steps, rngs, delta, fields = [], [], [], []
    for _ in range(nc):
        step, s, inc, has, uint, dl = _CHAIN.unpack_from(raw, off)
        off += _CHAIN.size
        bg = np.random.PCG64()
        bg.state = {"bit_generator": "PCG64",
                    "state": {"state": int.from_bytes(s, "little"), "inc": int.from_bytes(inc, "little")},
                    "has_uint32": has, "uinteger": uint}
        rngs.append(np.random.Generator(bg))
        steps.append(step)
        delta.append(dl)
        fields.append(np.frombuffer(raw, dtype="<f8", count=N, offset=off).reshape(spec.lat.shape))
        off += 8 * N
    if len(set(steps)) != 1:
        raise DomainError("chains in the checkpoint are at different steps")
    return steps[0], rngs, np.array(delta), np.array(fields, dtype=float)


# --- diagnostics ----------------------------------------------------------------

@dataclass
class DiagnosticReport:
    rhat: dict
    ess: dict
    converged: bool
    flagged: list


def _observable_streams(e: ChainEnsemble) -> dict:
    streams = {"energy": e.records["energy"]}
    for j, x in enumerate(e.displacements):
        streams[f"X{tuple(x)}"] = e.records["X"][:, :, j]
    for j in range(e.records["linear"].shape[2]):
        streams[f"linear{j}"] = e.records["linear"][:, :, j]
    return streams


def diagnose(e: ChainEnsemble) -> DiagnosticReport:
    """Split R-hat and effective sample size per recorded observable."""
    if e.n_chains < 2:
        raise DomainError("diagnostics need at least two chains")
    if e.n_records < MIN_RECORDS:
        raise DomainError(f"diagnostics need at least {MIN_RECORDS} records per chain, got {e.n_records}")
    rhat, ess = {}, {}
    for name, s in _observable_streams(e).items():
        rhat[name] = split_rhat(s)
        ess[name] = effective_sample_size(s)
    flagged = [k for k, v in rhat.items() if not v <= RHAT_THRESHOLD]
    return DiagnosticReport(rhat, ess, not flagged, flagged)


# --- Brascamp-Lieb check --------------------------------------------------------

@dataclass
class BrascampLiebReport:
    log_moment: float
    se: float
    bound: float        # ||h||^2 / (2 lam)
    sharp_bound: float  # (f, [lam grad* grad + m^2]^{-1} f) / 2 with f = grad* h
    holds: bool
    holds_sharp: bool
    heavy_tail: bool


def gaussian_log_moment(lat: TorusLattice, c: float, m: float, h: np.ndarray) -> float:
    """Exact ``log <exp (h, grad phi)>`` for ``V = c|z|^2/2``."""
    f = div_star(np.asarray(h, dtype=float), d=lat.d)
    return 0.5 * float(np.vdot(f, resolvent_apply(f, lat.shape, c, m**2)))


def check_brascamp_lieb(e: ChainEnsemble, h: np.ndarray, n_blocks: int = 20) -> BrascampLiebReport:
    """Compare the empirical ``log <exp (h, omega)>`` with the Brascamp-Lieb bounds."""
    spec = e.spec
    if spec.mu != 0:
        raise DomainError("the Brascamp-Lieb check needs an untilted ensemble")
    h = np.asarray(h, dtype=float)
    lam = spec.V.lam
    hn2 = float((h**2).sum())
    if hn2 / lam > 2:
        raise DomainError("||h||^2/lam must be <= 2 for a finite-variance exponential moment")
    Y = None
    for j, hj in enumerate(e.linear_h):
        if hj.shape == h.shape and np.array_equal(hj, h):
            Y = e.records["linear"][:, :, j]
            break
    if Y is None:
        if "fields" not in e.records:
            raise DomainError("h was not recorded and no fields were retained")
        d = spec.lat.d
        gu = grad(e.records["fields"], d=d)
        Y = np.tensordot(gu, h, axes=([0] + list(range(3, 3 + d)), list(range(d + 1))))
    shift = float(Y.max()) if hn2 > 0 else 0.0
    units = block_units(np.exp(Y - shift), n_blocks)
    est, se = jackknife_function(units, lambda mean: np.log(mean) + shift)
    est, se = float(est), float(se)
    bound = hn2 / (2 * lam)
    f = div_star(h, d=spec.lat.d)
    sharp = 0.5 * float(np.vdot(f, resolvent_apply(f, spec.lat.shape, lam, spec.m**2))) if hn2 > 0 else 0.0
    gap = bound - est
    heavy = bool(hn2 > 0 and gap > 0 and se > 0.2 * gap)
    if heavy:
        warnings.warn("jackknife SE exceeds 20% of the Brascamp-Lieb gap; exponential moment may be heavy-tailed")
    return BrascampLiebReport(est, se, bound, sharp, est <= bound + 3 * se, est <= sharp + 3 * se, heavy)
