"""Transformer encoder classifier with addressable intermediate layers.

The model is split as ``classify(forward_layers(embed(x), m -> M))`` so that
mixup methods can enter and leave at any layer ``m``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor
from .layers import Linear, Module, TransformerLayer, masked_mean, truncated_normal


@dataclass
class EncoderConfig:
    layers: int = 4
    dim: int = 64
    heads: int = 4
    max_len: int = 64
    vocab: int = 5000
    classes: int = 2
    dropout: float = 0.1
    ffn: int = 0  # 0 means 4 * dim

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} must be divisible by heads {self.heads}")
        if self.layers < 2 or self.max_len < 2 or self.classes < 2:
            raise ValueError("need layers >= 2, max_len >= 2 and classes >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def d_ff(self) -> int:
        return self.ffn or 4 * self.dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TokenSequence:
    """One padded sequence: ``ids`` and ``mask`` have length L, mask is a prefix of ones."""

    ids: np.ndarray
    mask: np.ndarray
    length: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=np.int8)
        if self.ids.shape != self.mask.shape:
            raise ValueError("ids and mask must have equal length")
        if int(self.mask.sum()) != self.length or not np.all(self.mask[: self.length] == 1):
            raise ValueError("mask must be a prefix of `length` ones")


@dataclass
class TokenBatch:
    ids: np.ndarray  # (B, L) int
    mask: np.ndarray  # (B, L) 0/1

    @classmethod
    def stack(cls, seqs: list[TokenSequence], trim: bool = False) -> "TokenBatch":
        ids = np.stack([s.ids for s in seqs])
        mask = np.stack([s.mask for s in seqs])
        if trim:
            n = max(1, int(mask.sum(axis=1).max()))
            ids, mask = ids[:, :n], mask[:, :n]
        return cls(ids, mask)

    def __len__(self):
        return self.ids.shape[0]

    def take(self, index) -> "TokenBatch":
        return TokenBatch(self.ids[index], self.mask[index])


@dataclass
class ContextualEmbedding:
    """Batched h^(m): values (B, L, D) at ``layer`` with the (B, L) mask."""

    layer: int
    values: Tensor
    mask: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.values.shape


class Encoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.config = c = config
        emb = Module()
        self.tok = emb.add_param("tok", truncated_normal(rng, (c.vocab, c.dim)))
        self.pos = emb.add_param("pos", truncated_normal(rng, (c.max_len, c.dim)))
        self.add_child("embed", emb)
        self.blocks: list[TransformerLayer] = []
        for j in range(1, c.layers + 1):
            block = TransformerLayer(c.dim, c.heads, c.d_ff, c.dropout, rng)
            self.blocks.append(self.add_child(f"layer{j}", block))
        self.head = self.add_child("head", Linear(c.dim, c.classes, rng))

    # parameter bookkeeping -------------------------------------------------
    def layer_parameters(self, j: int) -> list[Tensor]:
        """Parameters of transformer layer ``j`` (1-based); ``j = 0`` is the embedding table."""
        if j == 0:
            return [self.tok, self.pos]
        return self.blocks[j - 1].parameters()

    def head_parameters(self) -> list[Tensor]:
        return self.head.parameters()

    # forward ---------------------------------------------------------------
    def embed(self, tokens) -> ContextualEmbedding:
        """Layer-0 embedding: token rows plus learned position rows."""
        if isinstance(tokens, TokenSequence):
            tokens = TokenBatch(tokens.ids[None], tokens.mask[None])
        ids, mask = np.asarray(tokens.ids), np.asarray(tokens.mask)
        if ids.ndim != 2:
            raise ValueError(f"expected (B, L) ids, got {ids.shape}")
        n = ids.shape[1]
        if n > self.config.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.config.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab):
            raise ValueError(f"token id out of range [0, {self.config.vocab})")
        h = ops.gather(self.tok, ids) + self.pos[:n]
        return ContextualEmbedding(0, h, mask)

    def forward_layers(self, h: ContextualEmbedding, target: int, train: bool = False,
                       rng=None, keep: bool = False):
        """Apply layers ``h.layer + 1 .. target``.

        With ``keep=True`` returns a dict layer -> ContextualEmbedding holding
        every intermediate output (including the input).
        """
        if not h.layer < target <= self.config.layers:
            raise ValueError(f"need {h.layer} < target <= {self.config.layers}, got target {target}")
        seen = {h.layer: h}
        x = h.values
        for j in range(h.layer + 1, target + 1):
            x = self.blocks[j - 1](x, h.mask, train=train, rng=rng)
            seen[j] = ContextualEmbedding(j, x, h.mask)
        return seen if keep else seen[target]

    def pool(self, h: ContextualEmbedding) -> Tensor:
        return masked_mean(h.values, h.mask)

    def classify_pooled(self, s: Tensor) -> Tensor:
        return ops.softmax(self.head(s), axis=-1)

    def classify(self, h: ContextualEmbedding) -> Tensor:
        """Class probabilities (B, C) from the last layer: masked mean, affine, softmax."""
        if h.layer != self.config.layers:
            raise ValueError(f"classify needs layer {self.config.layers}, got {h.layer}")
        return self.classify_pooled(self.pool(h))

    def __call__(self, tokens, train: bool = False, rng=None) -> Tensor:
        h0 = self.embed(tokens)
        return self.classify(self.forward_layers(h0, self.config.layers, train, rng))
