"""Out-of-manifold mixup: embedding generator, manifold discriminator, joint loss.

The generator reads two layer-``m_g`` embeddings through a shared transformer
layer, pools each to a sentence vector and maps the concatenation to a
softmax 3-vector whose first two entries are the lower bound ``alpha`` and
width ``delta`` of a uniform range for the mixing coefficient.  The
coefficient is drawn by reparameterization, ``lam = alpha + gamma * delta``
with ``gamma ~ U(0, 1)``, so gradients reach the generator.

The discriminator scores layer-``m_d`` embeddings: 1 for embeddings computed
from actual text, 0 for generated ones.  Generator and discriminator both
*minimize* the same discrimination loss (cooperative, not adversarial).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.losses import bce_loss, kl_one_hot_loss
from .autodiff.tensor import ParamGroup, Tensor, as_tensor, check_partition, gradients
from .encoder import ContextualEmbedding, Encoder, EncoderConfig, TokenBatch
from .layers import Linear, Module, TransformerLayer, masked_mean

ENC_BELOW = "encoder-below-mg"
ENC_ABOVE = "encoder-mg-and-above"
HEAD = "classifier-head"
GEN = "generator"
DISC = "discriminator"
GROUP_NAMES = (ENC_BELOW, ENC_ABOVE, HEAD, GEN, DISC)

# which parameter groups each objective may update
OOMMIX_ROUTES = {
    "l_c": (ENC_BELOW, ENC_ABOVE, HEAD),
    "l_g": (ENC_ABOVE, HEAD, GEN),
    "l_d": (GEN, DISC),
}


def sentence_embed(tower: TransformerLayer, h: ContextualEmbedding, train: bool = False, rng=None) -> Tensor:
    """Tower-transform a sequence and average its unmasked rows -> (B, D)."""
    return masked_mean(tower(h.values, h.mask, train=train, rng=rng), h.mask)


class Generator(Module):
    def __init__(self, dim: int, heads: int, d_ff: int, dropout: float, layer: int, rng: np.random.Generator):
        super().__init__()
        self.layer = layer
        self.tower = self.add_child("tower", TransformerLayer(dim, heads, d_ff, dropout, rng))
        self.fc1 = self.add_child("fc1", Linear(2 * dim, dim, rng))
        self.fc2 = self.add_child("fc2", Linear(dim, 3, rng))

    def head(self, s1: Tensor, s2: Tensor) -> Tensor:
        """Normalized (alpha, delta, slack) for each pair of sentence vectors."""
        s = ops.concat([s1, s2], axis=-1)
        return ops.softmax(self.fc2(ops.gelu(self.fc1(s))), axis=-1)

    def pooled(self, h: ContextualEmbedding, train: bool = False, rng=None) -> Tensor:
        if h.layer != self.layer:
            raise ValueError(f"generator sits at layer {self.layer}, got embedding from layer {h.layer}")
        return sentence_embed(self.tower, h, train, rng)


class Discriminator(Module):
    def __init__(self, dim: int, heads: int, d_ff: int, dropout: float, layer: int, rng: np.random.Generator):
        super().__init__()
        self.layer = layer
        self.tower = self.add_child("tower", TransformerLayer(dim, heads, d_ff, dropout, rng))
        self.fc1 = self.add_child("fc1", Linear(dim, dim, rng))
        self.fc2 = self.add_child("fc2", Linear(dim, 1, rng))

    def __call__(self, h: ContextualEmbedding, train: bool = False, rng=None) -> Tensor:
        return discriminate(self, h, train, rng)


def generator_interval(gen: Generator, h1: ContextualEmbedding, h2: ContextualEmbedding,
                       train: bool = False, rng=None) -> tuple[Tensor, Tensor]:
    """Per-pair ``(alpha, delta)``; the sampling range ``[alpha, alpha + delta]`` lies in [0, 1]."""
    if h1.layer != h2.layer:
        raise ValueError(f"layer mismatch: {h1.layer} vs {h2.layer}")
    p = gen.head(gen.pooled(h1, train, rng), gen.pooled(h2, train, rng))
    return p[:, 0], p[:, 1]


def sample_lambda(alpha, delta, rng: np.random.Generator | None = None, gamma=None):
    """Reparameterized draw from U(alpha, alpha + delta).

    Returns ``(gamma, lam)``: the noise as a constant array and ``lam`` as a
    tensor with d lam / d alpha = 1 and d lam / d delta = gamma.
    """
    alpha, delta = as_tensor(alpha), as_tensor(delta)
    if gamma is None:
        gamma = rng.random(alpha.shape)
    gamma = np.asarray(gamma, dtype=alpha.dtype).reshape(alpha.shape)
    return gamma, alpha + delta * gamma


def mix_embeddings(h1: ContextualEmbedding, h2: ContextualEmbedding, lam) -> ContextualEmbedding:
    """``lam * h1 + (1 - lam) * h2`` per pair; the mask is the union of both masks."""
    if h1.layer != h2.layer:
        raise ValueError(f"layer mismatch: {h1.layer} vs {h2.layer}")
    if h1.shape != h2.shape:
        raise ops.ShapeError(f"mix_embeddings: {h1.shape} vs {h2.shape}")
    lam = as_tensor(lam, dtype=h1.values.dtype)
    if lam.ndim == 0:
        lam = lam.reshape(1)
    lam3 = lam.reshape(-1, 1, 1)
    mixed = ops.affine_combine(lam3, h1.values, 1.0 - lam3, h2.values)
    return ContextualEmbedding(h1.layer, mixed, np.maximum(h1.mask, h2.mask))


def mix_labels(y1, y2, lam, classes: int) -> Tensor:
    """``lam * e_y1 + (1 - lam) * e_y2`` as a (B, C) tensor (differentiable in ``lam``)."""
    y1, y2 = np.atleast_1d(y1), np.atleast_1d(y2)
    for y in (y1, y2):
        if np.any((y < 0) | (y >= classes)):
            raise ValueError(f"label out of range [0, {classes})")
    lam = as_tensor(lam)
    eye = np.eye(classes, dtype=lam.dtype)
    lam2 = lam.reshape(-1, 1)
    return ops.affine_combine(lam2, eye[y1], 1.0 - lam2, eye[y2])


def discriminate(disc: Discriminator, h: ContextualEmbedding, train: bool = False, rng=None) -> Tensor:
    """Probability (B,) that each embedding was computed from actual text."""
    if h.layer != disc.layer:
        raise ValueError(f"discriminator sits at layer {disc.layer}, got embedding from layer {h.layer}")
    s = sentence_embed(disc.tower, h, train, rng)
    return ops.sigmoid(disc.fc2(ops.gelu(disc.fc1(s)))).reshape(-1)


# --------------------------------------------------------------------- model
@dataclass
class MixConfig:
    m_g: int = 1
    m_d: int = 4
    ld_reduction: str = "mean"  # "mean" halves the paired BCE sum
    discriminator: bool = True


class MixupModel(Module):
    """Encoder plus generator and discriminator."""

    def __init__(self, config: EncoderConfig, m_g: int, m_d: int, rng: np.random.Generator):
        super().__init__()
        if not 0 <= m_g <= m_d <= config.layers:
            raise ValueError(f"need 0 <= m_g <= m_d <= {config.layers}, got m_g={m_g}, m_d={m_d}")
        self.config = config
        self.m_g, self.m_d = m_g, m_d
        self.encoder = self.add_child("encoder", Encoder(config, rng))
        c = config
        self.generator = self.add_child("generator", Generator(c.dim, c.heads, c.d_ff, c.dropout, m_g, rng))
        self.discriminator = self.add_child("discriminator", Discriminator(c.dim, c.heads, c.d_ff, c.dropout, m_d, rng))

    def param_groups(self) -> dict[str, ParamGroup]:
        enc = self.encoder
        below = [p for j in range(0, self.m_g + 1) for p in enc.layer_parameters(j)]
        above = [p for j in range(self.m_g + 1, self.config.layers + 1) for p in enc.layer_parameters(j)]
        groups = {
            ENC_BELOW: ParamGroup(ENC_BELOW, below),
            ENC_ABOVE: ParamGroup(ENC_ABOVE, above),
            HEAD: ParamGroup(HEAD, enc.head_parameters()),
            GEN: ParamGroup(GEN, self.generator.parameters()),
            DISC: ParamGroup(DISC, self.discriminator.parameters()),
        }
        check_partition(list(groups.values()), self.parameters())
        return groups

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)[:3]}...")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype, copy=True)


# -------------------------------------------------------------------- losses
@dataclass
class MixOutput:
    """Per-pair generator output for one batch (pair i mixes i with perm[i])."""

    alpha: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    mixed_label: np.ndarray
    perm: np.ndarray


@dataclass
class LossBundle:
    l_c: Tensor
    l_g: Tensor | None
    l_d: Tensor | None
    e: float
    total: Tensor
    routes: dict = field(default_factory=lambda: dict(OOMMIX_ROUTES))
    mix: MixOutput | None = None

    def values(self) -> dict[str, float]:
        f = lambda t: 0.0 if t is None else float(t.data)  # noqa: E731
        return {"l_c": f(self.l_c), "l_g": f(self.l_g), "l_d": f(self.l_d), "e": float(self.e),
                "total": f(self.total)}


def one_hot(y, classes: int, dtype=np.float32) -> np.ndarray:
    return np.eye(classes, dtype=dtype)[np.asarray(y)]


def discrimination_loss(scores_generated: Tensor, scores_actual: Tensor, reduction: str = "mean") -> Tensor:
    """Pair-averaged ``BCE(D(generated), 0) + BCE(D(actual), 1)``.

    ``reduction="mean"`` halves the sum so an uninformed discriminator
    (s = 0.5 everywhere) scores ln 2.
    """
    fake = bce_loss(scores_generated, 0.0)
    real = bce_loss(scores_actual, 1.0)
    if reduction == "mean":
        return (fake + real) * 0.5
    if reduction == "sum":
        return fake + real
    raise ValueError(f"unknown discrimination reduction {reduction!r}")


def compute_losses(model: MixupModel, batch: TokenBatch, labels, perm, e: float,
                   rng: np.random.Generator, train: bool = True, dropout_rng=None,
                   ld_reduction: str = "mean", use_discriminator: bool = True,
                   force_lambda: float | None = None) -> LossBundle:
    """Forward pass producing L_C, L_G, L_D and ``total = L_C + L_G + e * L_D``.

    ``rng`` draws the reparameterization noise; ``dropout_rng`` drives
    dropout in train mode.  ``force_lambda`` bypasses the generator (testing).
    """
    labels = np.asarray(labels)
    perm = np.asarray(perm)
    n = len(labels)
    if n < 2:
        raise ValueError("mixup needs a batch of at least 2 examples")
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm must be a permutation of the batch indices")
    enc, gen, disc = model.encoder, model.generator, model.discriminator
    M, m_g, m_d = model.config.layers, model.m_g, model.m_d
    C = model.config.classes

    h0 = enc.embed(batch)
    actual = enc.forward_layers(h0, M, train, dropout_rng, keep=True)
    y = one_hot(labels, C, h0.values.dtype)
    l_c = kl_one_hot_loss(enc.classify(actual[M]), y)

    hg = actual[m_g]
    s = gen.pooled(hg, train, dropout_rng)
    probs = gen.head(s, ops.gather(s, perm))
    alpha, delta = probs[:, 0], probs[:, 1]
    if force_lambda is None:
        gamma, lam = sample_lambda(alpha, delta, rng)
    else:
        gamma = np.zeros(n, dtype=hg.values.dtype)
        lam = as_tensor(np.full(n, force_lambda, dtype=hg.values.dtype))
    partner = ContextualEmbedding(m_g, ops.gather(hg.values, perm), hg.mask[perm])
    mixed0 = mix_embeddings(hg, partner, lam)
    y_mix = mix_labels(labels, labels[perm], lam, C)
    mixed = enc.forward_layers(mixed0, M, train, dropout_rng, keep=True) if m_g < M else {M: mixed0}
    l_g = kl_one_hot_loss(enc.classify(mixed[M]), y_mix)

    l_d = None
    total = l_c + l_g
    if use_discriminator:
        gen_md, act_md = mixed[m_d], actual[m_d]
        both = ContextualEmbedding(m_d, ops.concat([gen_md.values, act_md.values], axis=0),
                                   np.concatenate([gen_md.mask, act_md.mask], axis=0))
        scores = discriminate(disc, both, train, dropout_rng)
        l_d = discrimination_loss(scores[:n], scores[n:], ld_reduction)
        if e != 0.0:
            total = total + l_d * float(e)

    mix = MixOutput(alpha.data.astype(np.float64), delta.data.astype(np.float64), gamma.astype(np.float64),
                    lam.data.astype(np.float64), y_mix.data.astype(np.float64), perm.copy())
    return LossBundle(l_c, l_g, l_d, float(e), total, dict(OOMMIX_ROUTES), mix)


def apply_gradients(bundle: LossBundle, groups: dict[str, ParamGroup]) -> dict[int, np.ndarray]:
    """Sum of per-objective gradients, each restricted to the groups it may update.

    L_D enters with weight ``e``.  Returns a map param id -> gradient; every
    parameter of every group gets an entry (zeros when nothing reached it).
    """
    out: dict[int, np.ndarray] = {}
    for key, names in bundle.routes.items():
        loss = getattr(bundle, key)
        scale = bundle.e if key == "l_d" else 1.0
        if loss is None or scale == 0.0:
            continue
        params = [p for name in names for p in groups[name]]
        for pid, g in gradients(loss, params, scale).items():
            prev = out.get(pid)
            out[pid] = g if prev is None else prev + g
    for group in groups.values():
        for p in group:
            if p.id not in out:
                out[p.id] = np.zeros(p.shape, dtype=p.dtype)
    return out


class WeightController:
    """Raises the discrimination weight while the discriminator is failing.

    Every ``every`` steps, if the mean of the last ``every`` L_D values
    exceeds ``threshold``, multiply ``e`` by ``factor`` (capped at ``cap``).
    """

    def __init__(self, e: float = 1.0, every: int = 50, threshold: float = 0.6,
                 factor: float = 1.5, cap: float = 8.0):
        self.e = float(e)
        self.every, self.threshold, self.factor, self.cap = every, threshold, factor, cap
        self._window: list[float] = []

    def update(self, l_d: float) -> float:
        if self.every <= 0 or self.e == 0.0:
            return self.e
        self._window.append(float(l_d))
        if len(self._window) >= self.every:
            if np.mean(self._window) > self.threshold:
                self.e = min(self.e * self.factor, self.cap)
            self._window.clear()
        return self.e
