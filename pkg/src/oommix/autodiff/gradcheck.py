"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, gradients


class NondeterministicError(RuntimeError):
    pass


def numeric_gradient(fn: Callable[[], Tensor], param: Tensor, eps: float) -> np.ndarray:
    flat = param.data.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(fn().data)
        flat[i] = orig - eps
        down = float(fn().data)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * eps)
    return out.reshape(param.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(num / den)


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn`` rebuilds a scalar loss from ``params`` (which should be float64) on
    every call.  The error is taken per parameter tensor as
    ``|a - n| / max(|a|, |n|, 1e-8)`` in the Euclidean norm and the maximum
    over tensors is returned.
    """
    loss = fn()
    again = fn()
    if not np.array_equal(loss.data, again.data):
        raise NondeterministicError("loss changed between identical evaluations; disable dropout")
    analytic = gradients(loss, params)
    worst = 0.0
    for p in params:
        a = analytic.get(p.id, np.zeros(p.shape)).astype(np.float64)
        n = numeric_gradient(fn, p, eps)
        worst = max(worst, relative_error(a, n))
    return worst
