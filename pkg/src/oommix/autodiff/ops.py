"""Differentiable primitives.

Each function computes its output with numpy and registers a backward rule
``rule(g, needs) -> grads`` that returns one gradient (or ``None``) per input.
``needs`` flags which inputs actually require a gradient so expensive
products can be skipped.
"""

from __future__ import annotations

import builtins
import math

import numpy as np

from .tensor import Tensor, as_tensor, default_dtype, record


class ShapeError(ValueError):
    pass


def _bad(op: str, *shapes, detail: str = "") -> ShapeError:
    shapes_txt = ", ".join(str(tuple(s)) for s in shapes)
    return ShapeError(f"{op}: incompatible shapes {shapes_txt}{': ' + detail if detail else ''}")


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else default_dtype()
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _bad(op, a.shape, b.shape) from None


# ------------------------------------------------------------- elementwise
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)

    def rule(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None,
        )

    return record("add", a.data + b.data, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)

    def rule(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(-g, b.shape) if needs[1] else None,
        )

    return record("sub", a.data - b.data, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)

    def rule(g, needs):
        return (
            _unbroadcast(g * b.data, a.shape) if needs[0] else None,
            _unbroadcast(g * a.data, b.shape) if needs[1] else None,
        )

    return record("mul", a.data * b.data, (a, b), rule)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def rule(g, needs):
        return (
            _unbroadcast(g / b.data, a.shape) if needs[0] else None,
            _unbroadcast(-g * out / b.data, b.shape) if needs[1] else None,
        )

    return record("div", out, (a, b), rule)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    if isinstance(b, Tensor):
        return _lift(a, b), b
    return _lift(a), _lift(b)


def affine_combine(a, x, b, y) -> Tensor:
    """``a * x + b * y`` where the coefficients are scalars or broadcastable tensors."""
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise _bad("affine_combine", x.shape, y.shape)
    return add(mul(a, x), mul(b, y))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record("exp", out, (x,), lambda g, needs: (g * out,))


def log(x: Tensor) -> Tensor:
    return record("log", np.log(x.data), (x,), lambda g, needs: (g / x.data,))


def clamp(x: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip values; gradient passes only where the input was inside the range."""
    out = np.clip(x.data, lo, hi)

    def rule(g, needs):
        inside = np.ones(x.shape, dtype=bool)
        if lo is not None:
            inside &= x.data >= lo
        if hi is not None:
            inside &= x.data <= hi
        return (g * inside,)

    return record("clamp", out, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return record("sigmoid", out, (x,), lambda g, needs: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record("tanh", out, (x,), lambda g, needs: (g * (1.0 - out * out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of the Gaussian error linear unit."""
    z = x.data
    inner = _GELU_C * (z + 0.044715 * (z * z * z))
    t = np.tanh(inner)
    out = 0.5 * z * (1.0 + t)

    def rule(g, needs):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * z * z)
        return (g * (0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * dinner),)

    return record("gelu", out, (x,), rule)


# -------------------------------------------------------------- reductions
def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def rule(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record("sum", np.asarray(out), (x,), rule)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def rule(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return record("mean", np.asarray(out), (x,), rule)


# ---------------------------------------------------------------- linear alg
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise _bad("matmul", a.shape, b.shape)
    if b.ndim == 2:
        out = a.data @ b.data

        def rule(g, needs):
            ga = g @ b.data.T if needs[0] else None
            gb = None
            if needs[1]:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return record("matmul", out, (a, b), rule)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise _bad("matmul", a.shape, b.shape) from None
    out = a.data @ b.data

    def rule(g, needs):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if needs[0] else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if needs[1] else None
        return ga, gb

    return record("matmul", out, (a, b), rule)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g, needs):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (x,), rule)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise _bad("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def rule(g, needs):
        gx = gg = gb = None
        if needs[0]:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        if needs[1]:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if needs[2]:
            gb = g.reshape(-1, d).sum(axis=0)
        return gx, gg, gb

    return record("layer_norm", out, (x, gamma, beta), rule)


# ----------------------------------------------------------------- structure
def concat(xs, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    nd = xs[0].ndim
    ax = axis % nd
    for x in xs[1:]:
        if x.ndim != nd or any(x.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise _bad("concat", *(t.shape for t in xs))
    out = np.concatenate([x.data for x in xs], axis=ax)
    bounds = np.cumsum([0] + [x.shape[ax] for x in xs])

    def rule(g, needs):
        parts = []
        for i, need in enumerate(needs):
            if not need:
                parts.append(None)
                continue
            sl = [builtins.slice(None)] * nd
            sl[ax] = builtins.slice(bounds[i], bounds[i + 1])
            parts.append(np.ascontiguousarray(g[tuple(sl)]))
        return parts

    return record("concat", out, tuple(xs), rule)


def slice(x: Tensor, index) -> Tensor:  # noqa: A001
    try:
        out = x.data[index]
    except IndexError as exc:
        raise _bad("slice", x.shape, detail=str(exc)) from None
    basic = _is_basic(index)

    def rule(g, needs):
        full = np.zeros(x.shape, dtype=g.dtype)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return record("slice", np.array(out, copy=True), (x,), rule)


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, builtins.slice)) or i is None or i is Ellipsis for i in items)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise _bad("reshape", x.shape, tuple(shape) if not isinstance(shape, int) else (shape,)) from None
    return record("reshape", out, (x,), lambda g, needs: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise _bad("transpose", x.shape, detail=f"axes {axes}")
    inv = np.argsort(axes)
    return record("transpose", x.data.transpose(axes), (x,), lambda g, needs: (g.transpose(inv),))


def gather(table: Tensor, ids) -> Tensor:
    """Row gather ``table[ids]`` along the first axis (embedding lookup)."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise _bad("gather", table.shape, ids.shape, detail="ids must be integers")
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise _bad("gather", table.shape, ids.shape, detail=f"id out of range [0, {n})")
    out = table.data[ids]

    def rule(g, needs):
        full = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (full,)

    return record("gather", out, (table,), rule)


embedding = gather


def masked_fill(x: Tensor, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by a constant."""
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)
    except ValueError:
        raise _bad("masked_fill", x.shape, mask.shape) from None
    if out.shape != x.shape:
        raise _bad("masked_fill", x.shape, mask.shape)
    return record("masked_fill", out, (x,), lambda g, needs: (np.where(mask, 0, g).astype(g.dtype),))


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs a seeded generator")
    keep = 1.0 - p
    scale = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    return record("dropout", x.data * scale, (x,), lambda g, needs: (g * scale,))


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "log": log,
    "exp": exp,
    "clamp": clamp,
    "mean": mean,
    "sum": sum,
    "concat": concat,
    "slice": slice,
    "reshape": reshape,
    "transpose": transpose,
    "embedding": gather,
    "gather": gather,
    "masked_fill": masked_fill,
    "dropout": dropout,
    "affine_combine": affine_combine,
}


def forward_primitive(name: str, inputs, attrs: dict | None = None) -> Tensor:
    """Dispatch a primitive by name: ``forward_primitive("softmax", [x], {"axis": 0})``."""
    try:
        fn = PRIMITIVES[name]
    except KeyError:
        raise ValueError(f"unknown primitive {name!r}") from None
    return fn(*inputs, **(attrs or {}))
