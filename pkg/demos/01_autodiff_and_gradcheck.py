"""
Reverse-mode autodiff and finite-difference checks
===================================================

Builds a small expression graph by hand, pulls gradients back through it and
compares them with central differences.
"""

import numpy as np

from oommix.autodiff import backward, grad_check, kl_one_hot_loss, ops, parameter
from oommix.autodiff.tensor import precision
from oommix.gradsuite import format_table, run_suite

# a scalar first: d(x*x)/dx at 3 is 6
x = parameter(np.array(3.0))
backward(x * x, [x])
print("grad of x*x at 3:", float(x.grad))

# a two-layer classifier on random data, checked in float64
with precision(np.float64):
    rng = np.random.default_rng(0)
    w1, b1 = parameter(rng.standard_normal((5, 7))), parameter(np.zeros(7))
    w2 = parameter(rng.standard_normal((7, 3)))
    inputs = rng.standard_normal((4, 5))
    targets = np.eye(3)[[0, 2, 1, 1]]

    def loss():
        hidden = ops.gelu(ops.matmul(inputs, w1) + b1)
        return kl_one_hot_loss(ops.softmax(ops.matmul(hidden, w2)), targets)

    print("relative error, two-layer net:", grad_check(loss, [w1, b1, w2]))

# a few entries of the shipped suite (the full one runs with `oommix gradcheck`)
print(format_table(run_suite(instances=5, names=["softmax", "layer_norm", "transformer_layer"])))
