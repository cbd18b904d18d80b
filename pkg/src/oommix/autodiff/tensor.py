"""Dense tensors with a reverse-mode gradient tape.

Every tensor produced while recording is enabled carries a monotonically
increasing node id, its parent tensors and a backward rule.  Because ids are
handed out at creation time, sorting the reachable nodes by id gives a valid
topological order of the computation record; replaying the backward rules in
descending id order is the reverse sweep.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count(1)
_state = threading.local()

DEFAULT_DTYPE = np.float32


def default_dtype():
    return getattr(_state, "dtype", DEFAULT_DTYPE)


def set_default_dtype(dtype) -> None:
    """Set the floating point width used for new tensors on this thread."""
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _state.dtype = dtype.type


@contextlib.contextmanager
def precision(dtype):
    old = default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = old


def is_recording() -> bool:
    return getattr(_state, "recording", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (evaluation passes)."""
    old = is_recording()
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = old


BackwardFn = Callable[[np.ndarray, Sequence[bool]], Sequence["np.ndarray | None"]]


class Tensor:
    """A numpy buffer plus the bookkeeping needed for reverse-mode AD."""

    __slots__ = ("data", "grad", "requires_grad", "name", "id", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(default_dtype())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op: str | None = None

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}{op})"

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------ operators
    # Bound lazily in ops.py to avoid an import cycle.
    def __add__(self, other):
        return _ops().add(self, other)

    def __radd__(self, other):
        return _ops().add(other, self)

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    def __rmul__(self, other):
        return _ops().mul(other, self)

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __neg__(self):
        return _ops().mul(self, -1.0)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __getitem__(self, index):
        return _ops().slice(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        return _ops().transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return _ops().sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops().mean(self, axis=axis, keepdims=keepdims)

    def backward(self, params: Iterable["Tensor"] | None = None):
        return backward(self, params)


def _not_scalar(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def _ops():
    from . import ops

    return ops


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or default_dtype()))


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=default_dtype()), requires_grad=True, name=name)


def record(op: str, data: np.ndarray, parents: Sequence[Tensor], rule: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and register its backward rule."""
    out = Tensor(data)
    out._op = op
    if is_recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = rule
    return out


# ---------------------------------------------------------------- reverse sweep
def _reachable(root: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in seen or not node.requires_grad:
            continue
        seen[node.id] = node
        stack.extend(node._parents)
    return sorted(seen.values(), key=lambda n: n.id)


def gradients(loss: Tensor, params: Iterable[Tensor] | None = None, scale: float = 1.0) -> dict[int, np.ndarray]:
    """Gradients of ``loss`` with respect to trainable leaves.

    When ``params`` is given, only those leaves receive gradients and the sweep
    is pruned to nodes lying on a path from one of them to ``loss``.  The
    forward computation is untouched; only which gradients are produced
    changes.  Returns a map from leaf node id to gradient buffer.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    nodes = _reachable(loss)
    if params is None:
        relevant = {n.id for n in nodes}
    else:
        allowed = {p.id for p in params}
        relevant = set()
        for n in nodes:  # ascending id == topological order
            if n.id in allowed or any(p.id in relevant for p in n._parents):
                relevant.add(n.id)
        if loss.id not in relevant:
            return {}
        allowed_leaf = allowed

    adj: dict[int, np.ndarray] = {loss.id: np.full(loss.shape, scale, dtype=loss.dtype)}
    out: dict[int, np.ndarray] = {}
    for node in reversed(nodes):
        g = adj.pop(node.id, None)
        if g is None or node.id not in relevant:
            continue
        if node.is_leaf:
            if params is None or node.id in allowed_leaf:
                out[node.id] = g
            continue
        needs = [p.id in relevant for p in node._parents]
        grads = node._backward(g, needs)
        for parent, pg, need in zip(node._parents, grads, needs):
            if pg is None or not need:
                continue
            if pg.shape != parent.shape:
                raise RuntimeError(
                    f"backward rule of {node._op} produced shape {pg.shape} for input {parent.shape}"
                )
            prev = adj.get(parent.id)
            adj[parent.id] = pg if prev is None else prev + pg
    return out


def backward(loss: Tensor, params: Iterable[Tensor] | None = None, scale: float = 1.0) -> dict[int, np.ndarray]:
    """Reverse sweep that accumulates into ``.grad`` of the permitted leaves.

    Leaves outside ``params`` are left untouched, so their accumulated
    gradient receives exactly zero contribution from this loss.
    """
    params = list(params) if params is not None else None
    grads = gradients(loss, params, scale)
    leaves = params if params is not None else [n for n in _reachable(loss) if n.is_leaf]
    for p in leaves:
        g = grads.get(p.id)
        if g is None:
            continue
        if p.grad is None:
            p.grad = np.array(g, dtype=p.dtype, copy=True)
        else:
            p.grad += g
    return grads


class ParamGroup:
    """Named set of trainable tensors."""

    def __init__(self, name: str, members: Sequence[Tensor] = ()):
        self.name = name
        self.members = list(members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        return f"ParamGroup({self.name!r}, {len(self.members)} tensors)"


def check_partition(groups: Sequence[ParamGroup], params: Sequence[Tensor]) -> None:
    """Raise unless ``groups`` partition ``params`` exactly."""
    seen: dict[int, str] = {}
    for g in groups:
        for p in g:
            if p.id in seen:
                raise ValueError(f"{p.name or p.id} belongs to both {seen[p.id]} and {g.name}")
            seen[p.id] = g.name
    missing = [p.name or p.id for p in params if p.id not in seen]
    extra = set(seen) - {p.id for p in params}
    if missing or extra:
        raise ValueError(f"groups do not partition parameters (missing={missing}, extra={len(extra)})")
