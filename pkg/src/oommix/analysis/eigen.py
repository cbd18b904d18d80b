"""Symmetric eigen-solver: power iteration with deflation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class EigenResult:
    values: np.ndarray  # (k,) descending
    vectors: np.ndarray  # (n, k) unit columns
    residuals: np.ndarray  # ||A v - lam v|| per pair, on the original matrix
    iterations: np.ndarray


def _power(B: np.ndarray, v: np.ndarray, max_iter: int, tol: float, res_tol: float, found=None):
    # ``found`` holds earlier eigenvectors; projecting them out keeps the
    # iteration off deflated directions, which sit at eigenvalue zero
    lam_old = np.inf
    lam = 0.0
    res = np.inf
    for it in range(1, max_iter + 1):
        w = B @ v
        if found is not None:
            w -= found @ (found.T @ w)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v, it
        res = np.linalg.norm(w - lam * v)
        v = w / nw
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)) and res <= res_tol:
            return lam, v, it
        lam_old = lam
    log.warning("power iteration hit max_iter=%d (residual %.3g)", max_iter, res)
    return lam, v, max_iter


def top_eigenpairs(A, k: int, max_iter: int = 10_000, tol: float = 1e-10, res_tol: float | None = None,
                   seed: int = 0) -> EigenResult:
    """Largest ``k`` (algebraic) eigenpairs of a symmetric matrix.

    Each pair is found by power iteration on the deflated matrix.  When the
    dominant remaining eigenvalue is negative the matrix is shifted by its
    magnitude so the iteration converges to the largest algebraic one.
    Iteration stops when the eigenvalue change is below ``tol`` (relative)
    and the residual is below ``res_tol`` (default ``1e-9 * ||A||_F``).
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"expected a square matrix, got {A.shape}")
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix is not symmetric")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    norm = np.linalg.norm(A)
    res_tol = 1e-9 * norm if res_tol is None else res_tol
    rng = np.random.default_rng(seed)
    B = A.copy()
    vals, vecs, iters = [], [], []
    for _ in range(k):
        found = np.stack(vecs, axis=1) if vecs else None
        v0 = rng.standard_normal(n)
        if found is not None:
            v0 -= found @ (found.T @ v0)
        v0 /= np.linalg.norm(v0)
        lam, v, it = _power(B, v0, max_iter, tol, res_tol, found)
        if lam < 0:
            shift = abs(lam)
            _, v, it2 = _power(B + shift * np.eye(n), v0, max_iter, tol, res_tol, found)
            lam = float(v @ B @ v)
            it += it2
        vals.append(lam)
        vecs.append(v)
        iters.append(it)
        B -= lam * np.outer(v, v)
    V = np.stack(vecs, axis=1)
    vals = np.array(vals)
    order = np.argsort(-vals, kind="stable")
    vals, V = vals[order], V[:, order]
    residuals = np.linalg.norm(A @ V - V * vals, axis=0)
    return EigenResult(vals, V, residuals, np.array(iters)[order])
