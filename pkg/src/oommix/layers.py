"""Building blocks shared by the encoder, generator and discriminator."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor, default_dtype, parameter

NEG_INF = -1e9


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal draws resampled until they fall within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(default_dtype())


class Module:
    """Minimal parameter container: subclasses register tensors in ``_params``."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, data) -> Tensor:
        p = parameter(data, name=name)
        self._params[name] = p
        return p

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + k, v) for k, v in self._params.items()]
        for cname, child in self._children.items():
            out.extend(child.named_parameters(f"{prefix}{cname}."))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.weight = self.add_param("weight", truncated_normal(rng, (d_in, d_out), std))
        self.bias = self.add_param("bias", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(d))
        self.beta = self.add_param("beta", np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


def attention_bias(mask: np.ndarray, dtype) -> np.ndarray:
    """Additive key mask of shape (B, 1, 1, L): 0 for real tokens, -1e9 for padding."""
    return np.where(mask[:, None, None, :] > 0, 0.0, NEG_INF).astype(dtype)


class TransformerLayer(Module):
    """Post-norm encoder block: self-attention, residual, norm, feed-forward, residual, norm."""

    def __init__(self, d: int, heads: int, d_ff: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.d, self.heads, self.dropout = d, heads, dropout
        self.q = self.add_child("q", Linear(d, d, rng))
        self.k = self.add_child("k", Linear(d, d, rng))
        self.v = self.add_child("v", Linear(d, d, rng))
        self.o = self.add_child("o", Linear(d, d, rng))
        self.ln1 = self.add_child("ln1", LayerNorm(d))
        self.ff1 = self.add_child("ff1", Linear(d, d_ff, rng))
        self.ff2 = self.add_child("ff2", Linear(d_ff, d, rng))
        self.ln2 = self.add_child("ln2", LayerNorm(d))

    def _split(self, x: Tensor, b: int, n: int) -> Tensor:
        return x.reshape(b, n, self.heads, self.d // self.heads).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, mask: np.ndarray, train: bool = False, rng=None) -> Tensor:
        b, n, d = x.shape
        if d != self.d:
            raise ops.ShapeError(f"transformer layer: expected width {self.d}, got {x.shape}")
        q = self._split(self.q(x), b, n)
        k = self._split(self.k(x), b, n)
        v = self._split(self.v(x), b, n)
        scores = ops.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(d // self.heads))
        scores = scores + attention_bias(mask, x.dtype)
        attn = ops.dropout(ops.softmax(scores, axis=-1), self.dropout, rng, train)
        ctx = ops.matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, n, d)
        h = self.ln1(x + ops.dropout(self.o(ctx), self.dropout, rng, train))
        ff = self.ff2(ops.gelu(self.ff1(h)))
        return self.ln2(h + ops.dropout(ff, self.dropout, rng, train))


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over the sequence axis counting only rows where ``mask`` is set."""
    mask = np.asarray(mask, dtype=x.dtype)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("cannot pool an all-masked sequence")
    summed = ops.sum(x * mask[:, :, None], axis=1)
    return summed * (1.0 / counts)[:, None].astype(x.dtype)
