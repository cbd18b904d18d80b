"""
Training with and without the discriminator
===========================================

Two short runs on the synthetic keyword task.  The coefficient log shows how
the generator's choices move over training; without the discriminator
nothing keeps them away from the endpoints.
Takes about two minutes.
"""

import numpy as np

from oommix.analysis import lambda_histogram, median_lambda
from oommix.corpus import SynthConfig, synthetic_split
from oommix.trainer import TrainConfig, train

data = synthetic_split(SynthConfig(classes=4, q=0.2), 2000, 400, 400, seed=0)

for discriminator in (True, False):
    cfg = TrainConfig(layers=4, dim=64, heads=4, m_g=1, m_d=4, max_len=16, warmup_steps=200,
                      eval_every=200, max_steps=1000, discriminator=discriminator, seed=0)
    report = train(cfg, data).report
    log = report.lambda_log
    print(f"discriminator={discriminator}: test acc {report.test_acc:.3f}, "
          f"median lambda {median_lambda(log, 0):.3f} -> {median_lambda(log, 1):.3f}, "
          f"running L_D {report.running_l_d():.3f}, final e {report.final_e:.2f}")
    edges, counts = lambda_histogram(log, phases=2, bins=10)
    for phase, row in enumerate(counts):
        bars = " ".join(f"{c:5d}" for c in row)
        print(f"  phase {phase + 1}: {bars}")
print("bins:", np.round(edges, 1))
