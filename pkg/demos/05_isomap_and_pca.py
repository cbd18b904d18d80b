"""
Geodesic embedding and variance coverage
========================================

Isomap on a rolled-up strip, compared with the straight-line distances, and
the share of principal directions needed to reach 80% of the variance.
"""

import numpy as np

from oommix.analysis import isomap, pca_variance_coverage

rng = np.random.default_rng(0)
t = 1.5 * np.pi * (1 + 2 * rng.random(500))
h = 10 * rng.random(500)
roll = np.stack([t * np.cos(t), h, t * np.sin(t)], axis=1)

res = isomap(roll, k=10, out_dim=2)
print("kept", len(res.kept), "dropped", res.dropped)
print("eigenvalues", np.round(res.eigenvalues, 1))
# the first coordinate should follow the angle along the roll
print("corr(first coordinate, angle):", abs(np.corrcoef(res.coords[:, 0], t[res.kept])[0, 1]).round(3))

iso = rng.standard_normal((5000, 8))
skewed = iso * np.array([6, 4, 2, 1, 0.5, 0.3, 0.2, 0.1])
print("coverage, isotropic cloud:", pca_variance_coverage(iso))
print("coverage, skewed cloud:   ", pca_variance_coverage(skewed))
