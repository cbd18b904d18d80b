"""
Baseline mixing strategies
==========================

Fixed-coefficient sentence mixup and beta-sampled hidden mixup, next to the
learned coefficients.
"""

import numpy as np

from oommix.baselines import fixed_sentence_mixup, sample_beta

rng = np.random.default_rng(0)
for a in (0.05, 0.1, 1.0):
    lam = sample_beta(a, rng, size=100_000)
    edge = np.mean((lam < 0.1) | (lam > 0.9))
    print(f"Beta({a}, {a}): mean {lam.mean():.3f}, share within 0.1 of an endpoint {edge:.3f}")

s1 = rng.standard_normal((2, 4))
s2 = rng.standard_normal((2, 4))
print("fixed 0.5 sentence mixup:\n", fixed_sentence_mixup(s1, s2).data)
print("midpoint check:", np.allclose(fixed_sentence_mixup(s1, s2).data, (s1 + s2) / 2, atol=1e-6))
