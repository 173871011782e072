"""Multivariate-normal rectangle probabilities.

P(low < Z <= high) for correlated standard normals, computed with the
sequential-conditioning transform and randomized scrambled-Sobol
integration. Each estimate comes with an error bound (three standard
errors over the randomized batches); points are doubled until the bound
meets the requested absolute tolerance or the budget runs out.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from ._parallel import map_chunks
from .errors import ConfigError

_SEED_MASK = (1 << 64) - 1


def cholesky_factor(correlation) -> np.ndarray:
    corr = np.asarray(correlation, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ConfigError("correlation must be a square matrix")
    if not np.allclose(corr, corr.T, atol=1e-10):
        raise ConfigError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-10):
        raise ConfigError("correlation matrix must have a unit diagonal")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("correlation matrix is not positive definite") from exc


def _genz_batch(chol, low, high, w) -> float:
    """Mean integrand value over one block of (d-1)-dimensional points."""
    dim = low.shape[0]
    ci = np.full(w.shape[0], ndtr(low[0] / chol[0, 0]))
    di = np.full(w.shape[0], ndtr(high[0] / chol[0, 0]))
    pv = di - ci
    y = np.empty((w.shape[0], dim - 1))
    for i in range(1, dim):
        u = ci + w[:, i - 1] * (di - ci)
        np.clip(u, 1e-15, 1 - 1e-12, out=u)
        y[:, i - 1] = ndtri(u)
        s = y[:, :i] @ chol[i, :i]
        with np.errstate(invalid="ignore"):
            ci = ndtr((low[i] - s) / chol[i, i])
            di = ndtr((high[i] - s) / chol[i, i])
        pv = pv * np.maximum(di - ci, 0.0)
    return float(pv.mean())


def _estimate_one(chol, low, high, rng, abs_tol, batches, start_points,
                  max_points):
    dim = low.shape[0]
    if dim == 0:
        return 1.0, 0.0
    if dim == 1:
        return float(ndtr(high[0]) - ndtr(low[0])), 0.0

    n = start_points
    while True:
        means = np.empty(batches)
        for b in range(batches):
            sob = qmc.Sobol(dim - 1, scramble=True, seed=rng)
            means[b] = _genz_batch(chol, low, high, sob.random(n))
        value = float(means.mean())
        bound = float(3.0 * means.std(ddof=1) / np.sqrt(batches))
        if bound <= abs_tol or n >= max_points:
            return min(max(value, 0.0), 1.0), bound
        n *= 2


def rectangle_probabilities(correlation, lows, highs, seed=0, abs_tol=1e-4,
                            batches=8, start_points=256, max_points=2**14,
                            threads=None):
    """Estimate P(low_k < Z <= high_k) for many rectangles at once.

    All rectangles share one correlation matrix (one Cholesky factor).
    Each rectangle gets its own RNG stream derived from (seed, index),
    so results do not depend on evaluation order or worker count.
    Returns (values, error_bounds) arrays.
    """
    lows = np.atleast_2d(np.asarray(lows, dtype=float))
    highs = np.atleast_2d(np.asarray(highs, dtype=float))
    if lows.shape != highs.shape:
        raise ConfigError("lows and highs must have the same shape")
    if np.any(highs < lows):
        raise ConfigError("rectangle bounds must satisfy low <= high")
    chol = cholesky_factor(correlation)
    if lows.shape[1] != chol.shape[0]:
        raise ConfigError(
            f"rectangles have {lows.shape[1]} dimensions, correlation has "
            f"{chol.shape[0]}"
        )
    master = int(seed) & _SEED_MASK

    def run(chunk):
        out = []
        for k in chunk:
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((master, k)))
            )
            out.append(
                _estimate_one(chol, lows[k], highs[k], rng, abs_tol,
                              batches, start_points, max_points)
            )
        return out

    pairs = map_chunks(run, range(lows.shape[0]), threads)
    values = np.array([p[0] for p in pairs])
    bounds = np.array([p[1] for p in pairs])
    return values, bounds


def rectangle_probability(correlation, low, high, seed=0, abs_tol=1e-4,
                          **kwargs):
    """Single-rectangle convenience wrapper; returns (value, bound)."""
    values, bounds = rectangle_probabilities(
        correlation, [low], [high], seed=seed, abs_tol=abs_tol, **kwargs
    )
    return float(values[0]), float(bounds[0])
