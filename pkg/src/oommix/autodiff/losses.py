"""KL divergence and binary cross entropy built from the primitives."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, as_tensor

EPS = 1e-12


def _check_distribution(x: np.ndarray, what: str) -> None:
    tol = 1e-6 if x.dtype == np.float64 else 1e-5
    if np.any(x < -tol):
        raise ValueError(f"{what} has negative entries")
    sums = x.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{what} rows must sum to 1 (worst deviation {worst:.3g})")


def _reduce(per_row: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return ops.mean(per_row)
    if reduction == "sum":
        return ops.sum(per_row)
    if reduction == "none":
        return per_row
    raise ValueError(f"unknown reduction {reduction!r}")


def kl_one_hot_loss(pred, target, reduction: str = "mean") -> Tensor:
    """KL(target || pred) over the last axis.

    ``sum_c t_c (log t_c - log p_c)`` with both logs guarded at 1e-12, so
    entries with ``t_c == 0`` contribute exactly zero.
    """
    pred, target = as_tensor(pred), as_tensor(target, dtype=as_tensor(pred).dtype)
    if pred.shape != target.shape:
        raise ops.ShapeError(f"kl_one_hot_loss: pred {pred.shape} vs target {target.shape}")
    _check_distribution(pred.data, "pred")
    _check_distribution(target.data, "target")
    log_t = ops.log(ops.clamp(target, EPS))
    log_p = ops.log(ops.clamp(pred, EPS))
    per_row = ops.sum(target * (log_t - log_p), axis=-1)
    return _reduce(per_row, reduction)


def bce_loss(score, label, reduction: str = "mean") -> Tensor:
    """``-y log s - (1 - y) log(1 - s)`` with both logs guarded at 1e-12."""
    score = as_tensor(score)
    label = np.broadcast_to(np.asarray(label, dtype=score.dtype), score.shape)
    if np.any((label != 0) & (label != 1)):
        raise ValueError("bce labels must be 0 or 1")
    s = ops.clamp(score, EPS, 1.0 - EPS)
    pos = ops.log(ops.clamp(s, EPS))
    neg = ops.log(ops.clamp(1.0 - s, EPS))
    per = -(ops.mul(label, pos) + ops.mul(1.0 - label, neg))
    return _reduce(per, reduction)
