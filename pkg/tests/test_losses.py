"""Contrastive loss tests.

The reference oracle below evaluates the loss definition with plain
nested loops, term by term, independent of the vectorized
implementation.  Gradients are checked with central finite differences
through an unnormalized parametrization (perturbing z directly would
leave the unit sphere)."""

from __future__ import annotations

import numpy as np
import pytest

from supwma.losses import SclConfig, scl_loss
from supwma.nn_core import (
    finite_difference_check,
    l2_normalize_backward,
    l2_normalize_forward,
    seeded_rng,
)


def nested_loop_scl(z: np.ndarray, labels: np.ndarray, tau: float) -> float:
    """Direct evaluation: sum over anchors of the mean positive log-ratio."""
    total = 0.0
    m = len(z)
    for i in range(m):
        positives = [p for p in range(m) if p != i and labels[p] == labels[i]]
        if not positives:
            continue
        anchor_sum = 0.0
        denom = sum(np.exp(np.dot(z[i], z[a]) / tau) for a in range(m) if a != i)
        for p in positives:
            anchor_sum += np.log(np.exp(np.dot(z[i], z[p]) / tau) / denom)
        total -= anchor_sum / len(positives)
    return total


def random_unit_batch(rng, rows, dim=6):
    z, _ = l2_normalize_forward(rng.normal(size=(rows, dim)))
    return z


class TestSclValues:
    def test_two_identical_positives_is_exactly_zero(self):
        z = np.array([[1.0, 0.0], [1.0, 0.0]])
        loss, grad = scl_loss(z, np.array([0, 0]))
        assert loss == 0.0
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_all_unique_classes_is_zero(self, rng):
        z = random_unit_batch(rng, 5)
        loss, grad = scl_loss(z, np.arange(5))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros_like(z))

    def test_three_sample_hand_case(self):
        # two aligned positives plus one orthogonal negative at tau=0.1:
        # each positive anchor contributes log(1 + e^-10)
        z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        labels = np.array([0, 0, 1])
        loss, _ = scl_loss(z, labels, SclConfig(temperature=0.1))
        expected = 2.0 * np.log(1.0 + np.exp(-10.0))
        assert loss == pytest.approx(expected, rel=1e-12)
        assert loss == pytest.approx(nested_loop_scl(z, labels, 0.1), rel=1e-12)

    def test_monotone_in_negative_alignment(self):
        # dragging the negative toward the positives' direction raises the loss
        labels = np.array([0, 0, 1])
        previous = -np.inf
        for step in range(10):
            t = step / 10.0
            third = np.array([t, 1.0 - t])
            third /= np.linalg.norm(third)
            z = np.vstack([[1.0, 0.0], [1.0, 0.0], third])
            loss, _ = scl_loss(z, labels, SclConfig(temperature=0.1))
            assert loss > previous
            previous = loss

    def test_nonnegative_when_positives_dominate(self, rng):
        # all same-class rows identical: every positive has the max similarity
        for _ in range(10):
            labels = rng.integers(0, 3, size=8)
            anchors = random_unit_batch(rng, 3)
            z = anchors[labels]
            loss, _ = scl_loss(z, labels)
            assert loss >= 0.0


class TestSclOracle:
    def test_matches_nested_loops_on_random_batches(self):
        rng = seeded_rng(99)
        for _ in range(100):
            rows = int(rng.integers(2, 65))
            classes = int(rng.integers(2, 9))
            labels = rng.integers(0, classes, size=rows)
            z = random_unit_batch(rng, rows)
            loss, _ = scl_loss(z, labels)
            assert abs(loss - nested_loop_scl(z, labels, 0.1)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_finite_differences(self, seed):
        rng = seeded_rng(seed)
        rows = int(rng.integers(3, 33))
        labels = rng.integers(0, 4, size=rows)
        raw0 = rng.normal(size=(rows, 5))

        def through_normalize(raw):
            z, norms = l2_normalize_forward(raw)
            loss, grad_z = scl_loss(z, labels)
            return loss, l2_normalize_backward(z, norms, grad_z)

        assert finite_difference_check(through_normalize, raw0, step=1e-6) < 1e-5

    def test_three_sample_gradient(self):
        # saturated regime: the loss is ~1e-4 built from terms of size 10,
        # so a wider step keeps the central difference above roundoff
        rng = seeded_rng(7)
        raw0 = np.array([[1.0, 0.1], [0.9, 0.0], [0.1, 1.0]]) + 0.01 * rng.normal(size=(3, 2))
        labels = np.array([0, 0, 1])

        def through_normalize(raw):
            z, norms = l2_normalize_forward(raw)
            loss, grad_z = scl_loss(z, labels, SclConfig(temperature=0.1))
            return loss, l2_normalize_backward(z, norms, grad_z)

        assert finite_difference_check(through_normalize, raw0, step=1e-4) < 1e-6


class TestSclInvariances:
    def test_orthogonal_transform_leaves_loss_unchanged(self, rng):
        z = random_unit_batch(rng, 12)
        labels = rng.integers(0, 3, size=12)
        base, _ = scl_loss(z, labels)
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        rotated, _ = scl_loss(z @ q, labels)
        assert abs(base - rotated) < 1e-9

    def test_batch_permutation_invariance(self, rng):
        z = random_unit_batch(rng, 16)
        labels = rng.integers(0, 4, size=16)
        base, _ = scl_loss(z, labels)
        for _ in range(5):
            perm = rng.permutation(16)
            permuted, _ = scl_loss(z[perm], labels[perm])
            assert abs(base - permuted) < 1e-12

    def test_finite_for_finite_inputs(self, rng):
        z = random_unit_batch(rng, 32)
        labels = rng.integers(0, 2, size=32)
        loss, grad = scl_loss(z, labels, SclConfig(temperature=1e-3))
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))


class TestSclValidation:
    def test_single_sample_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            scl_loss(np.array([[1.0, 0.0]]), np.array([0]))

    def test_non_unit_rows_rejected(self):
        with pytest.raises(ValueError, match="unit norm"):
            scl_loss(np.array([[2.0, 0.0], [1.0, 0.0]]), np.array([0, 0]))

    def test_bad_temperature_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            SclConfig(temperature=0.0)

    def test_label_length_mismatch(self):
        z = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="labels shape"):
            scl_loss(z, np.array([0, 1, 2]))
