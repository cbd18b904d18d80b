"""Hand-specified mixup strategies sharing the training harness.

* ``none``           classification loss only
* ``fixed-sentence`` pooled last-layer vectors mixed with a fixed coefficient (0.5)
* ``beta-hidden``    hidden-layer mixup with ``lam ~ Beta(a, a)``
* ``oommix``         learned coefficients (see :mod:`oommix.mixup`)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.losses import kl_one_hot_loss
from .autodiff.tensor import Tensor, as_tensor
from .encoder import ContextualEmbedding, TokenBatch
from .mixup import (
    ENC_ABOVE,
    ENC_BELOW,
    HEAD,
    LossBundle,
    MixOutput,
    MixupModel,
    compute_losses,
    mix_embeddings,
    mix_labels,
    one_hot,
)

KINDS = ("none", "fixed-sentence", "beta-hidden", "oommix")
_FULL = (ENC_BELOW, ENC_ABOVE, HEAD)


@dataclass
class MixStrategy:
    kind: str = "oommix"
    fixed_lambda: float = 0.5
    beta_a: float = 0.1
    layer: int | None = None  # beta-hidden mixing layer; None means m_g
    flip: bool = False  # beta-hidden: use max(lam, 1 - lam)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mix strategy {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.fixed_lambda <= 1.0:
            raise ValueError("fixed_lambda must lie in [0, 1]")
        if self.beta_a <= 0:
            raise ValueError("beta shape must be positive")


def fixed_sentence_mixup(s1, s2, lam: float = 0.5) -> Tensor:
    """``lam * s1 + (1 - lam) * s2`` on sentence-level vectors."""
    s1, s2 = as_tensor(s1), as_tensor(s2)
    return ops.affine_combine(lam, s1, 1.0 - lam, s2)


def sample_beta(a: float, rng: np.random.Generator, size=None, flip: bool = False):
    if a <= 0:
        raise ValueError(f"beta shape must be positive, got {a}")
    lam = rng.beta(a, a, size=size)
    return np.maximum(lam, 1.0 - lam) if flip else lam


def beta_hidden_mixup(h1: ContextualEmbedding, h2: ContextualEmbedding, a: float,
                      rng: np.random.Generator, flip: bool = False):
    """Mix two hidden embeddings with one Beta(a, a) coefficient per pair.

    Returns ``(lam, mixed)``; labels are mixed with :func:`mixup.mix_labels`.
    """
    lam = sample_beta(a, rng, size=h1.shape[0], flip=flip).astype(h1.values.dtype)
    return lam, mix_embeddings(h1, h2, lam)


def strategy_dispatch(strategy: MixStrategy, model: MixupModel, batch: TokenBatch, labels, perm,
                      e: float, rng: np.random.Generator, train: bool = True, dropout_rng=None,
                      ld_reduction: str = "mean", use_discriminator: bool = True) -> LossBundle:
    kind = strategy.kind
    if kind == "oommix":
        return compute_losses(model, batch, labels, perm, e, rng, train=train, dropout_rng=dropout_rng,
                              ld_reduction=ld_reduction, use_discriminator=use_discriminator)
    if kind not in KINDS:
        raise ValueError(f"unknown mix strategy {kind!r}")

    labels, perm = np.asarray(labels), np.asarray(perm)
    enc = model.encoder
    M, C = model.config.layers, model.config.classes
    h0 = enc.embed(batch)
    actual = enc.forward_layers(h0, M, train, dropout_rng, keep=True)
    l_c = kl_one_hot_loss(enc.classify(actual[M]), one_hot(labels, C, h0.values.dtype))
    if kind == "none":
        return LossBundle(l_c, None, None, 0.0, l_c, {"l_c": _FULL})

    if len(labels) < 2:
        raise ValueError("mixup needs a batch of at least 2 examples")
    if kind == "fixed-sentence":
        s = enc.pool(actual[M])
        lam = np.full(len(labels), strategy.fixed_lambda, dtype=s.dtype)
        mixed = fixed_sentence_mixup(s, ops.gather(s, perm), strategy.fixed_lambda)
        probs = enc.classify_pooled(mixed)
    else:
        layer = model.m_g if strategy.layer is None else strategy.layer
        h = actual[layer]
        partner = ContextualEmbedding(layer, ops.gather(h.values, perm), h.mask[perm])
        lam, mixed = beta_hidden_mixup(h, partner, strategy.beta_a, rng, strategy.flip)
        top = enc.forward_layers(mixed, M, train, dropout_rng) if layer < M else mixed
        probs = enc.classify(top)
    y_mix = mix_labels(labels, labels[perm], lam, C)
    l_mix = kl_one_hot_loss(probs, y_mix)
    lam64 = np.asarray(lam, dtype=np.float64)
    nan = np.full_like(lam64, np.nan)
    mix = MixOutput(nan, nan, nan, lam64, y_mix.data.astype(np.float64), perm.copy())
    return LossBundle(l_c, l_mix, None, 0.0, l_c + l_mix, {"l_c": _FULL, "l_g": _FULL}, mix)
