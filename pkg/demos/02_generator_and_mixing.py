"""
Generating a mixing coefficient and mixing two sentences
========================================================

An untrained model: the generator proposes an interval per pair, a
coefficient is drawn inside it, embeddings and labels are interpolated and
the three losses are computed.
"""

import numpy as np

from oommix.corpus import SynthConfig, build_vocab, synthetic_split
from oommix.mixup import compute_losses
from oommix.trainer import TrainConfig, build_model, encode_split

data = synthetic_split(SynthConfig(classes=4), 120, 20, 0, seed=0)
cfg = TrainConfig(layers=4, dim=64, heads=4, m_g=1, m_d=4, max_len=16)
vocab = build_vocab(data.train, cfg.vocab)
model = build_model(cfg, classes=4, vocab_size=len(vocab))
split = encode_split(data.train, vocab, cfg.max_len)

rng = np.random.default_rng(1)
tokens, labels = split.batch(np.arange(6))
perm = rng.permutation(6)
bundle = compute_losses(model, tokens, labels, perm, e=1.0, rng=rng, train=False)

mix = bundle.mix
print("pair  alpha  delta  gamma  lambda  mixed label")
for i in range(6):
    print(f"{i}->{perm[i]}  {mix.alpha[i]:.3f}  {mix.delta[i]:.3f}  {mix.gamma[i]:.3f}  {mix.lam[i]:.3f}  "
          + np.array2string(mix.mixed_label[i], precision=2))

# at initialization the generator head is close to uniform, so alpha and delta sit near 1/3,
# and an untrained discriminator scores everything near 0.5, giving L_D close to ln 2
print({k: round(v, 4) for k, v in bundle.values().items()})
