"""Finite-difference checks for every primitive and the composed model blocks.

Each check builds a fresh float64 instance from a seed, reduces the output to
a scalar with a fixed random weighting (so that e.g. softmax rows do not sum
to a constant) and compares reverse-mode gradients with central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import ops
from .autodiff.gradcheck import grad_check
from .autodiff.losses import bce_loss, kl_one_hot_loss
from .autodiff.tensor import Tensor, parameter, precision
from .encoder import ContextualEmbedding
from .layers import Module, TransformerLayer
from .mixup import Discriminator, Generator, discrimination_loss, mix_embeddings, mix_labels, sample_lambda

THRESHOLD = 1e-4
EPS = 1e-5

Instance = tuple[Callable[[], Tensor], list[Tensor]]


def _weighted(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    w = rng.standard_normal(out.shape)
    return lambda t: ops.sum(t * w)


def _check(build: Callable[[], Tensor], params: list[Tensor], rng) -> Instance:
    reduce = _weighted(build(), rng)
    return (lambda: reduce(build())), params


def _away_from(x: np.ndarray, points, margin: float = 1e-2) -> np.ndarray:
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + np.where(x[close] >= p, margin, -margin) * 2
    return x


def _p(rng, *shape, scale=1.0, name=None):
    return parameter(rng.standard_normal(shape) * scale, name=name)


# ---------------------------------------------------------------- primitives
def _binary(op):
    def make(rng):
        a = _p(rng, 3, 4)
        b = _p(rng, 4) if rng.random() < 0.5 else _p(rng, 3, 4)
        if op is ops.div:
            b.data[:] = np.sign(b.data) * (0.5 + np.abs(b.data))
        return _check(lambda: op(a, b), [a, b], rng)
    return make


def _matmul(rng):
    if rng.random() < 0.5:
        a, b = _p(rng, 2, 3, 4), _p(rng, 4, 5)
    else:
        a, b = _p(rng, 2, 3, 4), _p(rng, 2, 4, 2)
    return _check(lambda: ops.matmul(a, b), [a, b], rng)


def _affine(rng):
    x, y = _p(rng, 3, 2, 4), _p(rng, 3, 2, 4)
    a = _p(rng, 3, 1, 1)
    return _check(lambda: ops.affine_combine(a, x, 1.0 - a, y), [a, x, y], rng)


def _unary(op, positive=False):
    def make(rng):
        x = _p(rng, 3, 5)
        if positive:
            x.data[:] = 0.2 + np.abs(x.data)
        return _check(lambda: op(x), [x], rng)
    return make


def _clamp(rng):
    x = _p(rng, 4, 5)
    _away_from(x.data, (-0.5, 0.7))
    return _check(lambda: ops.clamp(x, -0.5, 0.7), [x], rng)


def _softmax(rng):
    x = _p(rng, 2, 3, 5)
    axis = int(rng.integers(-1, 3))
    return _check(lambda: ops.softmax(x, axis=axis), [x], rng)


def _layer_norm(rng):
    x, g, b = _p(rng, 2, 3, 6), _p(rng, 6), _p(rng, 6)
    return _check(lambda: ops.layer_norm(x, g, b), [x, g, b], rng)


def _reduce(op):
    def make(rng):
        x = _p(rng, 2, 3, 4)
        axis = [None, 0, 1, -1, (0, 2)][int(rng.integers(5))]
        keep = bool(rng.random() < 0.5)
        return _check(lambda: op(x, axis=axis, keepdims=keep), [x], rng)
    return make


def _concat(rng):
    a, b = _p(rng, 2, 3), _p(rng, 2, 4)
    c = _p(rng, 2, 1)
    return _check(lambda: ops.concat([a, b, c], axis=1), [a, b, c], rng)


def _slice(rng):
    x = _p(rng, 4, 5)
    index = [(slice(1, 3), slice(None, None, 2)), (np.array([0, 2, 2, 3]),), (slice(None), 1)][int(rng.integers(3))]
    return _check(lambda: ops.slice(x, index), [x], rng)


def _reshape(rng):
    x = _p(rng, 2, 6)
    return _check(lambda: ops.reshape(x, (3, 4)), [x], rng)


def _transpose(rng):
    x = _p(rng, 2, 3, 4)
    axes = tuple(rng.permutation(3))
    return _check(lambda: ops.transpose(x, axes), [x], rng)


def _gather(rng):
    table = _p(rng, 6, 3)
    ids = rng.integers(6, size=(2, 5))
    return _check(lambda: ops.gather(table, ids), [table], rng)


def _masked_fill(rng):
    x = _p(rng, 3, 4)
    mask = rng.random((3, 4)) < 0.4
    return _check(lambda: ops.masked_fill(x, mask, -3.0), [x], rng)


def _dropout(rng):
    x = _p(rng, 3, 6)
    seed = int(rng.integers(2**31))
    return _check(lambda: ops.dropout(x, 0.3, np.random.default_rng(seed), True), [x], rng)


# ------------------------------------------------------------------- blocks
def _scaled(module: Module, factor: float) -> list[Tensor]:
    params = module.parameters()
    for p in params:
        if p.name not in ("gamma", "beta"):
            p.data *= factor
        else:
            p.data += 0.1 * np.random.default_rng(p.data.size).standard_normal(p.shape)
    return params


def _random_mask(rng, b, n):
    mask = np.ones((b, n), dtype=np.int64)
    for i in range(b):
        mask[i, int(rng.integers(1, n + 1)):] = 0
    return mask


def _transformer(rng):
    layer = TransformerLayer(4, 2, 8, 0.0, rng)
    # a shared shift of every key adds a constant to each score row, so the key
    # bias has an exactly zero gradient; finite differences only see rounding
    # noise there, which the relative error cannot meaningfully compare
    params = [p for p in _scaled(layer, 10.0) if p is not layer.k.bias]
    x = _p(rng, 2, 3, 4, name="x")
    mask = _random_mask(rng, 2, 3)
    return _check(lambda: layer(x, mask), params + [x], rng)


def _generator(rng):
    gen = Generator(4, 2, 8, 0.0, 1, rng)
    params = _scaled(gen, 10.0)
    h1, h2 = _p(rng, 2, 3, 4, name="h1"), _p(rng, 2, 3, 4, name="h2")
    m1, m2 = _random_mask(rng, 2, 3), _random_mask(rng, 2, 3)
    gamma = rng.random(2)
    classes = 3
    y1, y2 = rng.integers(classes, size=2), rng.integers(classes, size=2)

    def build():
        e1, e2 = ContextualEmbedding(1, h1, m1), ContextualEmbedding(1, h2, m2)
        p = gen.head(gen.pooled(e1), gen.pooled(e2))
        _, lam = sample_lambda(p[:, 0], p[:, 1], gamma=gamma)
        mixed = mix_embeddings(e1, e2, lam)
        target = mix_labels(y1, y2, lam, classes)
        return ops.concat([mixed.values.reshape(2, -1), target], axis=1)

    return _check(build, params + [h1, h2], rng)


def _discriminator(rng):
    disc = Discriminator(4, 2, 8, 0.0, 2, rng)
    params = _scaled(disc, 10.0)
    h = _p(rng, 3, 3, 4, name="h")
    mask = _random_mask(rng, 3, 3)
    return _check(lambda: disc(ContextualEmbedding(2, h, mask)), params + [h], rng)


def _kl_loss(rng):
    logits = _p(rng, 3, 4)
    lam = parameter(rng.uniform(0.1, 0.9, size=3))
    y1, y2 = rng.integers(4, size=3), rng.integers(4, size=3)
    return (lambda: kl_one_hot_loss(ops.softmax(logits), mix_labels(y1, y2, lam, 4))), [logits, lam]


def _bce_loss(rng):
    z = _p(rng, 5)
    label = float(rng.integers(2))
    return (lambda: bce_loss(ops.sigmoid(z), label)), [z]


def _disc_loss(rng):
    a, b = _p(rng, 4), _p(rng, 4)
    red = "mean" if rng.random() < 0.5 else "sum"
    return (lambda: discrimination_loss(ops.sigmoid(a), ops.sigmoid(b), red)), [a, b]


PRIMITIVE_CHECKS: dict[str, Callable] = {
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "div": _binary(ops.div),
    "affine_combine": _affine,
    "matmul": _matmul,
    "exp": _unary(ops.exp),
    "log": _unary(ops.log, positive=True),
    "clamp": _clamp,
    "sigmoid": _unary(ops.sigmoid),
    "tanh": _unary(ops.tanh),
    "gelu": _unary(ops.gelu),
    "softmax": _softmax,
    "layer_norm": _layer_norm,
    "sum": _reduce(ops.sum),
    "mean": _reduce(ops.mean),
    "concat": _concat,
    "slice": _slice,
    "reshape": _reshape,
    "transpose": _transpose,
    "embedding": _gather,
    "masked_fill": _masked_fill,
    "dropout": _dropout,
}

BLOCK_CHECKS: dict[str, Callable] = {
    "transformer_layer": _transformer,
    "generator_head": _generator,
    "discriminator_head": _discriminator,
    "kl_loss": _kl_loss,
    "bce_loss": _bce_loss,
    "discrimination_loss": _disc_loss,
}


@dataclass
class CheckRow:
    name: str
    instances: int
    max_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_error < THRESHOLD


def run_suite(instances: int = 20, seed: int = 0, eps: float = EPS, names=None) -> list[CheckRow]:
    """Run every check (or those in ``names``) on ``instances`` random instances."""
    checks = {**PRIMITIVE_CHECKS, **BLOCK_CHECKS}
    if names is not None:
        unknown = set(names) - set(checks)
        if unknown:
            raise ValueError(f"unknown checks: {sorted(unknown)}")
        checks = {k: checks[k] for k in names}
    rows = []
    with precision(np.float64):
        for i, (name, make) in enumerate(checks.items()):
            rng = np.random.default_rng([seed, i])
            t0 = time.perf_counter()
            worst = 0.0
            for _ in range(instances):
                fn, params = make(rng)
                worst = max(worst, grad_check(fn, params, eps))
            rows.append(CheckRow(name, instances, worst, time.perf_counter() - t0))
    return rows


def format_table(rows: list[CheckRow]) -> str:
    lines = [f"{'check':<22}{'n':>4}{'max rel err':>14}{'sec':>8}  status"]
    for r in rows:
        lines.append(f"{r.name:<22}{r.instances:>4}{r.max_error:>14.3e}{r.seconds:>8.2f}  {'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)
