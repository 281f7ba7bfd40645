"""Classification metrics: accuracy, macro F1, cluster identification rate.

Conventions for macro F1 on a k x k confusion matrix (rows = truth,
columns = prediction):

* a class absent from both truth and predictions has undefined F1; it is
  excluded from the mean/std and a warning is emitted,
* a class absent from exactly one side, or with precision + recall = 0,
  scores F1 = 0,
* the reported spread is the population standard deviation over the
  included classes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_CIR_THRESHOLD = 20


def confusion(true_labels, predicted_labels, num_classes: int) -> np.ndarray:
    """Exact count matrix; entry [t, p] counts samples of true class t predicted p."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise ValueError("true and predicted labels must be 1-D and equal length")
    if len(true_labels):
        if true_labels.min() < 0 or true_labels.max() >= num_classes:
            raise ValueError(f"true label out of range [0, {num_classes})")
        if predicted_labels.min() < 0 or predicted_labels.max() >= num_classes:
            raise ValueError(f"predicted label out of range [0, {num_classes})")
    flat = true_labels * num_classes + predicted_labels
    return np.bincount(flat, minlength=num_classes * num_classes).reshape(
        num_classes, num_classes
    )


def accuracy(confusion_matrix: np.ndarray) -> float:
    """Trace over total count."""
    cm = np.asarray(confusion_matrix)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm) / total)


def macro_f1(confusion_matrix: np.ndarray):
    """Per-class F1 plus macro mean and population std.

    Returns (per_class, mean, std); excluded classes hold NaN in
    ``per_class``.
    """
    cm = np.asarray(confusion_matrix, dtype=np.float64)
    k = cm.shape[0]
    if cm.shape != (k, k) or k < 2:
        raise ValueError("confusion matrix must be square with k >= 2")
    true_totals = cm.sum(axis=1)
    pred_totals = cm.sum(axis=0)
    diag = np.diag(cm)

    per_class = np.zeros(k)
    excluded = (true_totals == 0) & (pred_totals == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_totals > 0, diag / pred_totals, 0.0)
        recall = np.where(true_totals > 0, diag / true_totals, 0.0)
        pr_sum = precision + recall
        per_class = np.where(pr_sum > 0, 2.0 * precision * recall / pr_sum, 0.0)
    per_class[excluded] = np.nan
    if np.any(excluded):
        warnings.warn(
            f"{int(excluded.sum())} class(es) absent from both truth and "
            "predictions; excluded from macro F1",
            stacklevel=2,
        )
    included = per_class[~excluded]
    if included.size == 0:
        raise ValueError("no class present in truth or predictions")
    return per_class, float(included.mean()), float(included.std())


def cir(predicted_labels, expected_clusters, threshold: int = DEFAULT_CIR_THRESHOLD) -> float:
    """Cluster identification rate.

    Fraction of the expected cluster ids that received at least
    ``threshold`` predicted streamlines.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    expected = np.unique(np.asarray(expected_clusters, dtype=np.int64))
    if expected.size == 0:
        raise ValueError("expected cluster set is empty")
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    counts = np.bincount(predicted_labels, minlength=int(expected.max()) + 1)
    detected = counts[expected] >= threshold
    return float(detected.mean())


@dataclass
class MetricsReport:
    """Bundle of evaluation results for one labeled set."""

    accuracy: float
    per_class_f1: np.ndarray
    macro_f1_mean: float
    macro_f1_std: float
    confusion: np.ndarray
    sample_count: int
    cir: float | None = None

    def to_dict(self) -> dict:
        """JSON-ready dict; excluded-class F1 values become null."""
        per_class = [None if np.isnan(v) else float(v) for v in self.per_class_f1]
        return {
            "accuracy": self.accuracy,
            "per_class_f1": per_class,
            "macro_f1_mean": self.macro_f1_mean,
            "macro_f1_std": self.macro_f1_std,
            "confusion": self.confusion.tolist(),
            "sample_count": self.sample_count,
            "cir": self.cir,
        }


def compute_report(
    true_labels,
    predicted_labels,
    num_classes: int,
    expected_clusters=None,
    cir_threshold: int = DEFAULT_CIR_THRESHOLD,
) -> MetricsReport:
    """Confusion, accuracy, and macro F1 in one pass; CIR when expectations are given."""
    cm = confusion(true_labels, predicted_labels, num_classes)
    per_class, mean, std = macro_f1(cm)
    rate = None
    if expected_clusters is not None:
        rate = cir(predicted_labels, expected_clusters, cir_threshold)
    return MetricsReport(
        accuracy=accuracy(cm),
        per_class_f1=per_class,
        macro_f1_mean=mean,
        macro_f1_std=std,
        confusion=cm,
        sample_count=int(cm.sum()),
        cir=rate,
    )
