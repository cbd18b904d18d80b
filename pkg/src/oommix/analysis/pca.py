"""How many principal directions cover a share of the variance."""

from __future__ import annotations

import numpy as np

from .eigen import top_eigenpairs


def covariance_spectrum(points) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need an (N, D) array with N >= 2")
    X = X - X.mean(axis=0)
    cov = X.T @ X / (X.shape[0] - 1)
    vals = top_eigenpairs(cov, cov.shape[0]).values
    return np.clip(vals, 0.0, None)


def pca_variance_coverage(points, target: float = 0.8) -> float:
    """Smallest k with the top-k eigenvalues reaching ``target`` of the total, divided by D."""
    if not 0.0 < target <= 1.0:
        raise ValueError("target must lie in (0, 1]")
    vals = covariance_spectrum(points)
    total = vals.sum()
    if total <= 0.0:
        raise ValueError("points have zero total variance")
    cum = np.cumsum(vals)
    k = int(np.searchsorted(cum, target * total - 1e-12 * total) + 1)
    return min(k, len(vals)) / len(vals)
