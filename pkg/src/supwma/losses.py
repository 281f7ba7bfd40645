"""Batch losses: supervised contrastive loss with an exact gradient.

The contrastive loss operates on unit-norm feature rows z and integer
class labels.  For each anchor i, with P(i) the other same-class rows
and A(i) all other rows, the per-anchor term is

    -1/|P(i)| * sum_{p in P(i)} log( exp(z_i . z_p / tau)
                                     / sum_{a in A(i)} exp(z_i . z_a / tau) )

and the batch loss is the sum over anchors.  Anchors without positives
contribute zero.  The learning rate absorbs the anchor-sum scale; this
is deliberately a sum, not a mean, which matters when transferring
hyperparameters across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import softmax_cross_entropy

# re-export: the downstream classification phase uses plain cross-entropy
ce_loss = softmax_cross_entropy

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class SclConfig:
    """Contrastive loss hyperparameters (temperature must be positive)."""

    temperature: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


def scl_loss(z: np.ndarray, labels, config: SclConfig | None = None):
    """Supervised contrastive loss and its exact gradient w.r.t. z.

    Parameters
    ----------
    z : (M, dim) array of unit-norm rows (checked within 1e-6).
    labels : (M,) integer class labels.
    config : temperature container; defaults to tau = 0.1.

    Returns
    -------
    (loss, grad) with grad shaped like z.

    Per-anchor log-denominators are computed with max subtraction; the
    shift cancels in the log-ratio, so stability costs no exactness.
    """
    cfg = config or SclConfig()
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("z must be a 2-D (M, dim) array")
    rows = z.shape[0]
    if rows < 2:
        raise ValueError("contrastive loss needs at least 2 samples")
    labels = np.asarray(labels)
    if labels.shape != (rows,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {rows}")
    norms = np.linalg.norm(z, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ValueError("contrastive features must be unit norm (within 1e-6)")

    sims = (z @ z.T) / cfg.temperature
    diag = np.arange(rows)
    sims_masked = sims.copy()
    sims_masked[diag, diag] = -np.inf

    shift = sims_masked.max(axis=1, keepdims=True)
    expd = np.exp(sims_masked - shift)
    expd[diag, diag] = 0.0
    denom = expd.sum(axis=1)
    log_denom = shift[:, 0] + np.log(denom)

    positives = labels[:, None] == labels[None, :]
    positives[diag, diag] = False
    pos_counts = positives.sum(axis=1)
    active = pos_counts > 0

    loss = 0.0
    coeffs = np.zeros_like(sims)
    if np.any(active):
        mean_pos_sim = (
            np.where(positives, sims, 0.0).sum(axis=1)[active] / pos_counts[active]
        )
        loss = float(np.sum(log_denom[active] - mean_pos_sim))
        softmax = expd / denom[:, None]
        coeffs[active] = (
            softmax[active] - positives[active] / pos_counts[active, None]
        )
    grad = (coeffs + coeffs.T) @ z / cfg.temperature
    return loss, grad
