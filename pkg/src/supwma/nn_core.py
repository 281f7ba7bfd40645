"""Deterministic numerical kernel with hand-written backward passes.

All tensors are C-order float64 numpy arrays; "matrix" below means a 2-D
array.  Every differentiable forward has a matching backward that
returns exact gradients of a scalar loss, verifiable with
:func:`finite_difference_check`.  Nothing here keeps global state: the
caller owns parameters, caches, and optimizer state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def seeded_rng(seed: int) -> np.random.Generator:
    """A PCG64 generator; identical seed gives an identical stream on all platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def glorot_uniform_init(shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)) for a (fan_in, fan_out) shape."""
    fan_in, fan_out = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


# ---------------------------------------------------------------------------
# Dense layer
# ---------------------------------------------------------------------------

@dataclass
class DenseLayer:
    """Affine map: out = x @ weights + bias.

    weights has shape (fan_in, fan_out); bias has shape (fan_out,).
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError("weights must be 2-D")
        if self.bias.shape != (self.weights.shape[1],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match fan_out {self.weights.shape[1]}"
            )


def dense_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> DenseLayer:
    """Glorot-uniform weights, zero bias."""
    return DenseLayer(glorot_uniform_init((fan_in, fan_out), rng), np.zeros(fan_out))


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != layer.weights.shape[0]:
        raise ValueError(
            f"dense input shape {x.shape} does not match fan_in {layer.weights.shape[0]}"
        )
    out = x @ layer.weights
    out += layer.bias  # in place: the GEMM output is freshly owned
    return out


def dense_backward(layer: DenseLayer, x: np.ndarray, grad_out: np.ndarray):
    """Gradients of a scalar loss w.r.t. (input, weights, bias).

    ``x`` is the forward input; ``grad_out`` is the loss gradient at the
    forward output, shape (M, fan_out).
    """
    if grad_out.shape != (x.shape[0], layer.weights.shape[1]):
        raise ValueError(f"grad_out shape {grad_out.shape} mismatches layer output")
    grad_in = grad_out @ layer.weights.T
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_in, grad_w, grad_b


# ---------------------------------------------------------------------------
# Activations and pooling
# ---------------------------------------------------------------------------

def relu_forward(x: np.ndarray):
    """Elementwise max(0, x). Returns (output, mask) with mask = x > 0."""
    return np.maximum(x, 0.0), x > 0.0


def relu_backward(mask: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is defined as 0
    return np.where(mask, grad_out, 0.0)


def maxpool_points(features: np.ndarray):
    """Column-wise max over the points of one streamline.

    ``features`` is (num_points, dim); returns (pooled (dim,), argmax (dim,)).
    Ties break toward the lowest point index.
    """
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("maxpool needs a non-empty (num_points, dim) array")
    return features.max(axis=0), features.argmax(axis=0)


def maxpool_points_backward(argmax: np.ndarray, num_points: int, grad_out: np.ndarray):
    """Route the pooled gradient back to the winning point of each column."""
    grad = np.zeros((num_points, grad_out.shape[0]))
    grad[argmax, np.arange(grad_out.shape[0])] = grad_out
    return grad


def maxpool_batch(features: np.ndarray):
    """Batched column-wise max: (M, num_points, dim) -> pooled (M, dim), argmax (M, dim)."""
    if features.ndim != 3 or features.shape[1] < 1:
        raise ValueError("maxpool needs a non-empty (M, num_points, dim) array")
    return features.max(axis=1), features.argmax(axis=1)


def maxpool_batch_backward(argmax: np.ndarray, num_points: int, grad_out: np.ndarray):
    rows, dim = grad_out.shape
    grad = np.zeros((rows, num_points, dim))
    grad[np.arange(rows)[:, None], argmax, np.arange(dim)[None, :]] = grad_out
    return grad


NORM_EPS = 1e-12


def l2_normalize_forward(x: np.ndarray):
    """Scale each row to unit Euclidean norm. Returns (output, row norms)."""
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= NORM_EPS):
        raise ValueError("degenerate contrastive feature (near-zero row norm)")
    return x / norms[:, None], norms


def l2_normalize_backward(y: np.ndarray, norms: np.ndarray, grad_out: np.ndarray):
    """Exact Jacobian-vector product of x -> x / ||x|| per row."""
    inner = np.sum(grad_out * y, axis=1, keepdims=True)
    return (grad_out - y * inner) / norms[:, None]


# ---------------------------------------------------------------------------
# Cross-entropy
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch with a numerically stable log-softmax.

    Returns (loss, grad_logits) with grad = (softmax - one_hot) / M.
    Raises ValueError for labels outside [0, num_classes).
    """
    if logits.ndim != 2:
        raise ValueError("logits must be (M, num_classes)")
    rows, num_classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (rows,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {rows}")
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -float(np.mean(log_probs[np.arange(rows), labels]))
    grad = np.exp(log_probs)
    grad[np.arange(rows), labels] -= 1.0
    grad /= rows
    return loss, grad


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    first: list = field(default_factory=list)
    second: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        first=[np.zeros_like(p) for p in params],
        second=[np.zeros_like(p) for p in params],
        step=0,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place, no weight decay.

    eps offsets the uncorrected sqrt(second moment); the bias corrections
    are folded into the step size, so the first unit-gradient step equals
    -lr / (1 + eps * (1 - beta2)**-0.5).
    Raises FloatingPointError on non-finite gradients (fail fast).
    """
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ValueError("params, grads, and state must have matching lengths")
    for grad in grads:
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    state.step += 1
    t = state.step
    scale = lr * np.sqrt(1.0 - state.beta2**t) / (1.0 - state.beta1**t)
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= scale * m / (np.sqrt(v) + state.eps)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(loss_and_grad, x: np.ndarray, step: float = 1e-6) -> float:
    """Compare an analytic gradient against central finite differences.

    ``loss_and_grad(x)`` must return (scalar loss, gradient with x's
    shape).  Every coordinate of ``x`` is perturbed by +-step.  Returns
    the maximum relative error, |num - ana| / max(|num| + |ana|, 1e-8).
    """
    _, analytic = loss_and_grad(x)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError("analytic gradient shape does not match input")
    flat = x.astype(np.float64).ravel().copy()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        loss_plus, _ = loss_and_grad(flat.reshape(x.shape))
        flat[i] = orig - step
        loss_minus, _ = loss_and_grad(flat.reshape(x.shape))
        flat[i] = orig
        numeric[i] = (loss_plus - loss_minus) / (2.0 * step)
    ana = analytic.ravel()
    denom = np.maximum(np.abs(numeric) + np.abs(ana), 1e-8)
    return float(np.max(np.abs(numeric - ana) / denom))
