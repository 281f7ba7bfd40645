# Every backward pass in the numerical kernel is exact. This script
# verifies each one against central finite differences and shows what a
# corrupted gradient looks like to the same harness.

import numpy as np

from supwma.nn_core import (
    DenseLayer,
    dense_backward,
    dense_forward,
    finite_difference_check,
    l2_normalize_backward,
    l2_normalize_forward,
    relu_backward,
    relu_forward,
    seeded_rng,
    softmax_cross_entropy,
)

rng = seeded_rng(0)
x0 = rng.normal(size=(5, 8)) + 0.3
layer = DenseLayer(rng.normal(size=(8, 6)), rng.normal(size=6))
coeff = rng.normal(size=(5, 6))       # random linear readout: loss = sum(c * out)
coeff_same = rng.normal(size=(5, 8))
labels = rng.integers(0, 6, size=5)


def dense_pair(x):
    out = dense_forward(layer, x)
    grad_in, _, _ = dense_backward(layer, x, coeff)
    return float(np.sum(coeff * out)), grad_in


def relu_pair(x):
    out, mask = relu_forward(x)
    return float(np.sum(coeff_same * out)), relu_backward(mask, coeff_same)


def norm_pair(x):
    out, norms = l2_normalize_forward(x)
    return float(np.sum(coeff_same * out)), l2_normalize_backward(out, norms, coeff_same)


def ce_pair(logits):
    return softmax_cross_entropy(logits, labels)


def corrupted_pair(x):
    loss, grad = dense_pair(x)
    return loss, 1.1 * grad  # deliberately 10% wrong


print("max relative error, analytic vs central differences:")
print(f"  dense           {finite_difference_check(dense_pair, x0):.2e}")
print(f"  relu            {finite_difference_check(relu_pair, x0):.2e}")
print(f"  l2 normalize    {finite_difference_check(norm_pair, x0):.2e}")
print(f"  cross-entropy   {finite_difference_check(ce_pair, rng.normal(size=(5, 6))):.2e}")
print(f"  corrupted dense {finite_difference_check(corrupted_pair, x0):.2e}  <- harness catches it")
