"""Bias-corrected and accelerated (BCa) bootstrap intervals."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm


def _is_mean(fn) -> bool:
    return fn is np.mean or fn is np.average


def jackknife_values(data: np.ndarray, aggregator: Callable) -> np.ndarray:
    n = len(data)
    if _is_mean(aggregator) and data.ndim == 1:
        return (data.sum() - data) / (n - 1)
    keep = np.ones(n, dtype=bool)
    out = np.empty(n)
    for i in range(n):
        keep[i] = False
        out[i] = aggregator(data[keep])
        keep[i] = True
    return out


def acceleration(jack: np.ndarray) -> float:
    d = jack.mean() - jack
    denom = 6.0 * (d @ d) ** 1.5
    return float((d ** 3).sum() / denom) if denom > 0 else 0.0


def bias_correction(theta_hat: float, replicates: np.ndarray) -> float:
    """z0 from the fraction of replicates below the estimate, ties counted half."""
    B = len(replicates)
    frac = (np.sum(replicates < theta_hat) + 0.5 * np.sum(replicates == theta_hat)) / B
    frac = min(max(frac, 0.5 / B), 1 - 0.5 / B)
    return float(norm.ppf(frac))


def bca_endpoints(theta_hat: float, replicates: np.ndarray, jack: np.ndarray,
                  level: float = 0.95) -> tuple[float, float]:
    replicates = np.asarray(replicates, dtype=float)
    if np.all(replicates == replicates[0]):
        return float(replicates[0]), float(replicates[0])
    z0 = bias_correction(theta_hat, replicates)
    a = acceleration(np.asarray(jack, dtype=float))
    alpha = (1 - level) / 2
    qs = []
    for z_alpha in (norm.ppf(alpha), norm.ppf(1 - alpha)):
        num = z0 + z_alpha
        denom = 1 - a * num
        adj = norm.cdf(z0 + num / denom) if denom > 0 else (0.0 if num < 0 else 1.0)
        qs.append(adj)
    lo, hi = np.quantile(replicates, qs)
    return float(lo), float(hi)


def bootstrap_replicates(data: np.ndarray, aggregator: Callable, iterations: int,
                         rng: np.random.Generator) -> np.ndarray:
    n = len(data)
    idx = rng.integers(0, n, size=(iterations, n))
    if _is_mean(aggregator) and data.ndim == 1:
        return data[idx].mean(axis=1)
    return np.array([aggregator(data[row]) for row in idx])


def bca_interval(data: Sequence, aggregator: Callable = np.mean, iterations: int = 1000,
                 level: float = 0.95, seed: Optional[int] = 0) -> tuple[float, float, float]:
    """(low, point, high) BCa interval for ``aggregator(data)``.

    ``data`` is resampled along its first axis.  Constant data gives a
    zero-width interval at the point estimate.
    """
    data = np.asarray(data, dtype=float)
    if len(data) < 2:
        raise ValueError("need at least two observations")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    point = float(aggregator(data))
    if np.all(data == data[0]):
        return point, point, point
    rng = np.random.default_rng(seed)
    reps = bootstrap_replicates(data, aggregator, iterations, rng)
    lo, hi = bca_endpoints(point, reps, jackknife_values(data, aggregator), level)
    return lo, point, hi


def percentile_interval(data: Sequence, aggregator: Callable = np.mean, iterations: int = 1000,
                        level: float = 0.95, seed: Optional[int] = 0) -> tuple[float, float, float]:
    data = np.asarray(data, dtype=float)
    rng = np.random.default_rng(seed)
    reps = bootstrap_replicates(data, aggregator, iterations, rng)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(reps, [alpha, 1 - alpha])
    return float(lo), float(aggregator(data)), float(hi)
