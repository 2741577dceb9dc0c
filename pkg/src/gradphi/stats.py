"""Blocked jackknife, k-statistics and MCMC convergence diagnostics.

Streams from several chains are cut into contiguous blocks; the
``(chain, block)`` pieces are the jackknife units.  Blocks long compared with
the autocorrelation time make the units close to independent.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

DEFAULT_BLOCKS = 20


def block_units(x: np.ndarray, n_blocks: int = DEFAULT_BLOCKS) -> list[np.ndarray]:
    """Split ``x`` of shape ``(n_chains, n_records, ...)`` into ``(chain, block)`` pieces.

    Trailing records that do not fill a whole block are dropped.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        raise DomainError("expected (chains, records, ...) data")
    n = x.shape[1]
    n_blocks = max(1, min(n_blocks, n))
    size = n // n_blocks
    return [x[c, b * size:(b + 1) * size] for c in range(x.shape[0]) for b in range(n_blocks)]


def jackknife(units_stats: np.ndarray, full: np.ndarray | None = None):
    """Delete-one jackknife standard error from leave-one-out estimates.

    Parameters
    ----------
    units_stats : array ``(n_units, ...)``
        Estimate recomputed with each unit left out.
    full : array, optional
        Estimate from all units; defaults to the mean of ``units_stats``.
    """
    th = np.asarray(units_stats, dtype=float)
    n = th.shape[0]
    if n < 2:
        raise DomainError("jackknife needs at least two units")
    mean = th.mean(axis=0)
    se = np.sqrt((n - 1) / n * ((th - mean) ** 2).sum(axis=0))
    return (mean if full is None else full), se


def jackknife_function(units: list[np.ndarray], func):
    """Jackknife a function of the pooled record mean.

    ``func`` receives the mean over records (axis 0) of the pooled data and
    returns an array.  Returns ``(estimate, se)``.
    """
    sums = np.array([u.sum(axis=0) for u in units])
    counts = np.array([u.shape[0] for u in units], dtype=float)
    total, n = sums.sum(axis=0), counts.sum()
    full = np.asarray(func(total / n))
    shape = (-1,) + (1,) * (sums.ndim - 1)
    loo = (total - sums) / (n - counts).reshape(shape)
    return jackknife(np.array([func(v) for v in loo]), full)


# --- k-statistics ---------------------------------------------------------------

def kstats_from_sums(n, s1, s2, s3, s4):
    """Unbiased k-statistics ``k_1..k_4`` from power sums ``s_r = sum x^r``."""
    n = np.asarray(n, dtype=float)
    k1 = s1 / n
    k2 = (n * s2 - s1**2) / (n * (n - 1))
    k3 = (2 * s1**3 - 3 * n * s1 * s2 + n**2 * s3) / (n * (n - 1) * (n - 2))
    k4 = (-6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2
          - 4 * n * (n + 1) * s1 * s3 + n**2 * (n + 1) * s4) / (n * (n - 1) * (n - 2) * (n - 3))
    return np.stack([k1, k2, k3, k4])


def kstats(x: np.ndarray) -> np.ndarray:
    """k-statistics of a 1-d sample (or column-wise for 2-d input)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 4:
        raise DomainError("k-statistics up to order 4 need at least 4 samples")
    c = x.mean(axis=0)
    y = x - c
    k = kstats_from_sums(x.shape[0], *(np.sum(y**r, axis=0) for r in range(1, 5)))
    k[0] = k[0] + c
    return k


def kstats_jackknife(x: np.ndarray, n_blocks: int = DEFAULT_BLOCKS):
    """k-statistics of ``x`` ``(n_chains, n_records, ...)`` pooled over chains with blocked jackknife SEs.

    Returns ``(k, se)``, each of shape ``(4, ...)``.
    """
    x = np.asarray(x, dtype=float)
    units = block_units(x, n_blocks)
    c = np.mean([u.mean(axis=0) for u in units], axis=0)
    sums = np.array([[((u - c) ** r).sum(axis=0) for r in range(1, 5)] for u in units])
    counts = np.array([u.shape[0] for u in units], dtype=float)
    total, n = sums.sum(axis=0), counts.sum()
    full = kstats_from_sums(n, *total)
    full[0] = full[0] + c
    loo = []
    for i in range(len(units)):
        k = kstats_from_sums(n - counts[i], *(total - sums[i]))
        k[0] = k[0] + c
        loo.append(k)
    return jackknife(np.array(loo), full)


def cumulants_from_moments(m: np.ndarray) -> np.ndarray:
    """``kappa_1..kappa_3`` from raw moments ``m = (E X, E X^2, E X^3, ...)`` along axis 0."""
    m1, m2, m3 = m[0], m[1], m[2]
    return np.stack([m1, m2 - m1**2, m3 - 3 * m2 * m1 + 2 * m1**3])


# --- convergence diagnostics ----------------------------------------------------

def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    ``chains`` has shape ``(n_chains, n_draws)``.  Each chain is halved; the
    between/within variance estimate follows the standard split form.
    """
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    half = n // 2
    if half < 2:
        raise DomainError("split R-hat needs at least 4 draws per chain")
    parts = np.concatenate([chains[:, :half], chains[:, n - half:]])
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = half * means.var(ddof=1)
    var_plus = (half - 1) / half * W + B / half
    if W == 0:
        return 1.0 if var_plus == 0 else float("inf")
    return float(np.sqrt(var_plus / W))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    y = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size, axis=-1)
    return np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain effective sample size with Geyer's initial monotone sequence."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if n < 4:
        raise DomainError("ESS needs at least 4 draws per chain")
    acov = _autocov(chains)
    W = acov[:, 0].mean() * n / (n - 1)
    B_over_n = chains.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    var_plus = W * (n - 1) / n + B_over_n
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    pairs = []
    prev = np.inf
    for k in range(0, n - 1, 2):
        p = rho[k] + rho[k + 1]
        if p < 0:
            break
        p = min(p, prev)
        pairs.append(p)
        prev = p
    tau = -1.0 + 2.0 * sum(pairs)
    tau = max(tau, 1.0 / np.log10(max(m * n, 10)))
    return float(m * n / tau)
