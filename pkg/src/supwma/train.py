"""Two-phase training: contrastive pretraining, then a frozen-encoder classifier.

Phase 1 trains the encoder and projector with the supervised
contrastive loss.  Phase 2 freezes the encoder bitwise (its features
are computed once and cached), leaves the projector untouched, and
trains the classifier with cross-entropy.  Both phases use Adam with no
weight decay and seeded shuffling, so a (dataset, config) pair always
produces the same checkpoint.

``TrainConfig()`` carries the reference hyperparameters (lr 0.01 /
batch 6144 contrastive, lr 0.001 / batch 1024 downstream);
``TrainConfig.desk_scale()`` is the default configuration for
laptop-sized corpora.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import geometry
from .losses import SclConfig, scl_loss
from .metrics import MetricsReport, compute_report
from .model import (
    ArchDescriptor,
    ModelBundle,
    build_model,
    classify,
    classify_backward,
    encode,
    encode_backward,
    encode_features,
    layer_params,
    predict,
    project,
    project_backward,
    save_checkpoint,
)
from .nn_core import adam_init, adam_step, softmax_cross_entropy

log = logging.getLogger("supwma.train")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both phases plus batching/seed policy."""

    scl_lr: float = 0.01
    scl_batch: int = 6144
    cls_lr: float = 0.001
    cls_batch: int = 1024
    scl_epochs: int = 50
    cls_epochs: int = 50
    temperature: float = 0.1
    seed: int = 0
    validation_fraction: float = 0.1
    shuffle: bool = True

    def __post_init__(self):
        if self.scl_lr < 0 or self.cls_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.scl_batch < 2 or self.cls_batch < 2:
            raise ValueError("batch sizes must be >= 2")
        if self.scl_epochs < 1 or self.cls_epochs < 1:
            raise ValueError("epoch counts must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        """Defaults sized so a ~20k-streamline corpus trains in minutes on one core."""
        base = dict(scl_batch=2048, scl_epochs=12, cls_epochs=30)
        base.update(overrides)
        return cls(**base)


@dataclass
class TrainReport:
    """Loss curves, validation trace, and wall-clock for one pipeline run."""

    phase1_loss: list
    phase2_loss: list
    val_accuracy: list | None
    phase1_seconds: float
    phase2_seconds: float
    checkpoint_path: str | None = None
    validation: dict | None = None

    def to_dict(self) -> dict:
        return {
            "phase1": {"epoch_loss": self.phase1_loss, "wall_clock_sec": self.phase1_seconds},
            "phase2": {
                "epoch_loss": self.phase2_loss,
                "val_accuracy": self.val_accuracy,
                "wall_clock_sec": self.phase2_seconds,
            },
            "checkpoint": self.checkpoint_path,
            "validation": self.validation,
        }


def _phase_rng(seed: int, phase: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, phase])))


def iter_batches(order: np.ndarray, batch_size: int, min_batch: int = 1):
    """Consecutive index batches covering ``order`` exactly once.

    A terminal batch smaller than ``min_batch`` is merged into the
    previous one (the contrastive loss is undefined for single samples).
    """
    total = len(order)
    starts = list(range(0, total, batch_size))
    for pos, start in enumerate(starts):
        stop = min(start + batch_size, total)
        if pos + 1 == len(starts) - 1 and total - stop < min_batch and total - stop > 0:
            # next batch would be undersized: absorb it now
            yield order[start:]
            return
        yield order[start:stop]


def stratified_split(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    """Per-class holdout so every class appears in both parts when possible."""
    holdout = []
    keep = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        n_hold = int(round(fraction * len(members)))
        if fraction > 0 and len(members) >= 2:
            n_hold = min(max(n_hold, 1), len(members) - 1)
        else:
            n_hold = 0
        holdout.append(members[:n_hold])
        keep.append(members[n_hold:])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(holdout))


def train_scl_phase(
    features: np.ndarray,
    labels: np.ndarray,
    bundle: ModelBundle,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> list:
    """Contrastive phase: Adam on encoder + projector.

    Returns the per-epoch mean per-anchor loss.  The classifier is not
    touched.  Raises ValueError on a single-class dataset.
    """
    if len(np.unique(labels)) < 2:
        raise ValueError("contrastive phase requires >= 2 classes")
    rng = rng or _phase_rng(config.seed, 1)
    params = layer_params(bundle.encoder) + layer_params(bundle.projector)
    state = adam_init(params)
    loss_cfg = SclConfig(config.temperature)
    total = features.shape[0]
    curve = []
    for epoch in range(config.scl_epochs):
        order = rng.permutation(total) if config.shuffle else np.arange(total)
        epoch_loss = 0.0
        for idx in iter_batches(order, config.scl_batch, min_batch=2):
            pooled, enc_cache = encode(bundle, features[idx])
            z, proj_cache = project(bundle, pooled)
            loss, grad_z = scl_loss(z, labels[idx], loss_cfg)
            proj_grads, grad_pooled = project_backward(bundle, proj_cache, grad_z)
            enc_grads = encode_backward(bundle, enc_cache, grad_pooled)
            grads = [g for pair in enc_grads + proj_grads for g in pair]
            adam_step(params, grads, state, config.scl_lr)
            epoch_loss += loss
        curve.append(epoch_loss / total)
        log.info("scl epoch %d/%d loss %.6f", epoch + 1, config.scl_epochs, curve[-1])
    return curve


def train_cls_phase(
    features: np.ndarray,
    labels: np.ndarray,
    bundle: ModelBundle,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
    val_features: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
):
    """Downstream phase: encoder frozen, classifier trained with cross-entropy.

    Encoder features are computed once up front (the encoder never
    changes here), and the projector is never evaluated.  Returns
    (per-epoch mean loss, per-epoch validation accuracy or None).
    """
    num_classes = bundle.arch.n_classes
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    rng = rng or _phase_rng(config.seed, 2)
    global_train = encode_features(bundle, features)
    global_val = None
    if val_features is not None:
        global_val = encode_features(bundle, val_features)
    params = layer_params(bundle.classifier)
    state = adam_init(params)
    total = features.shape[0]
    curve, val_curve = [], [] if global_val is not None else None
    for epoch in range(config.cls_epochs):
        order = rng.permutation(total) if config.shuffle else np.arange(total)
        epoch_loss = 0.0
        for idx in iter_batches(order, config.cls_batch):
            logits, cache = classify(bundle, global_train[idx])
            loss, grad_logits = softmax_cross_entropy(logits, labels[idx])
            cla_grads, _ = classify_backward(bundle, cache, grad_logits)
            grads = [g for pair in cla_grads for g in pair]
            adam_step(params, grads, state, config.cls_lr)
            epoch_loss += loss * len(idx)
        curve.append(epoch_loss / total)
        if global_val is not None:
            logits, _ = classify(bundle, global_val)
            val_curve.append(float(np.mean(np.argmax(logits, axis=1) == val_labels)))
        log.info("cls epoch %d/%d loss %.6f", epoch + 1, config.cls_epochs, curve[-1])
    return curve, val_curve


def train_end_to_end(
    features: np.ndarray,
    labels: np.ndarray,
    bundle: ModelBundle,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> list:
    """Ablation trainer: encoder + classifier jointly on cross-entropy.

    No contrastive phase, no projector.  Uses the downstream
    lr/batch/epoch settings so it is comparable to phase 2.
    """
    num_classes = bundle.arch.n_classes
    if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    rng = rng or _phase_rng(config.seed, 3)
    params = layer_params(bundle.encoder) + layer_params(bundle.classifier)
    state = adam_init(params)
    total = features.shape[0]
    curve = []
    for epoch in range(config.cls_epochs):
        order = rng.permutation(total) if config.shuffle else np.arange(total)
        epoch_loss = 0.0
        for idx in iter_batches(order, config.cls_batch):
            pooled, enc_cache = encode(bundle, features[idx])
            logits, cla_cache = classify(bundle, pooled)
            loss, grad_logits = softmax_cross_entropy(logits, labels[idx])
            cla_grads, grad_pooled = classify_backward(bundle, cla_cache, grad_logits)
            enc_grads = encode_backward(bundle, enc_cache, grad_pooled)
            grads = [g for pair in enc_grads + cla_grads for g in pair]
            adam_step(params, grads, state, config.cls_lr)
            epoch_loss += loss * len(idx)
        curve.append(epoch_loss / total)
        log.info("e2e epoch %d/%d loss %.6f", epoch + 1, config.cls_epochs, curve[-1])
    return curve


def evaluate(bundle: ModelBundle, streamline_set: geometry.StreamlineSet) -> MetricsReport:
    """Predict and score a labeled set."""
    if streamline_set.labels is None:
        raise ValueError("evaluation requires labels")
    if len(streamline_set) == 0:
        raise ValueError("cannot evaluate an empty set")
    predicted = predict(bundle, streamline_set)
    return compute_report(streamline_set.labels, predicted, bundle.arch.n_classes)


def run_pipeline(
    train_slp,
    train_labels,
    out_dir,
    config: TrainConfig,
    val_slp=None,
    val_labels=None,
    arch: ArchDescriptor | None = None,
) -> tuple:
    """Full run: load, resample, phase 1, phase 2, validate, persist.

    When no validation files are given and ``validation_fraction`` > 0,
    a stratified slice of the training set is held out.  Writes
    ``checkpoint.swc`` and ``train_report.json`` into ``out_dir`` and
    returns (bundle, TrainReport).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_set = geometry.read_slp(train_slp)
    train_y = geometry.read_labels(train_labels, expected_count=len(train_set))
    val_set = None
    val_y = None
    if val_slp is not None:
        val_set = geometry.read_slp(val_slp)
        val_y = geometry.read_labels(val_labels, expected_count=len(val_set))
        val_set = geometry.StreamlineSet(val_set.streamlines, val_y)
    elif config.validation_fraction > 0 and len(train_set) >= 2:
        keep, hold = stratified_split(train_y, config.validation_fraction, _phase_rng(config.seed, 4))
        val_set = geometry.StreamlineSet([train_set.streamlines[i] for i in hold], train_y[hold])
        val_y = train_y[hold]
        train_set = geometry.StreamlineSet([train_set.streamlines[i] for i in keep], train_y[keep])
        train_y = train_y[keep]

    if arch is None:
        observed = int(train_y.max()) if len(train_y) else 0
        if val_y is not None and len(val_y):
            observed = max(observed, int(val_y.max()))
        arch = ArchDescriptor(n_classes=observed + 1)
    if len(train_y) and train_y.max() >= arch.n_classes:
        raise ValueError(f"label out of range [0, {arch.n_classes})")

    train_x = geometry.to_feature_batch(train_set, arch.n_points)
    val_x = None
    if val_set is not None:
        val_x = geometry.to_feature_batch(val_set, arch.n_points)

    bundle = build_model(arch, seed=config.seed)

    start = time.perf_counter()
    phase1 = train_scl_phase(train_x, train_y, bundle, config)
    t_phase1 = time.perf_counter() - start

    start = time.perf_counter()
    phase2, val_curve = train_cls_phase(
        train_x, train_y, bundle, config, val_features=val_x, val_labels=val_y
    )
    t_phase2 = time.perf_counter() - start

    validation = None
    if val_set is not None and len(val_set):
        validation = evaluate(bundle, val_set).to_dict()

    checkpoint_path = out / "checkpoint.swc"
    save_checkpoint(bundle, checkpoint_path)
    report = TrainReport(
        phase1_loss=phase1,
        phase2_loss=phase2,
        val_accuracy=val_curve,
        phase1_seconds=t_phase1,
        phase2_seconds=t_phase2,
        checkpoint_path=str(checkpoint_path),
        validation=validation,
    )
    (out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return bundle, report
