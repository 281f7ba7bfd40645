"""Metric tests against brute-force counting oracles."""

from __future__ import annotations

import numpy as np
import pytest

from supwma.metrics import accuracy, cir, compute_report, confusion, macro_f1


def brute_force_confusion(true, pred, k):
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true, pred):
        cm[t, p] += 1
    return cm


def brute_force_macro_f1(cm):
    """Per-class F1 by the textbook formulas, loops only."""
    k = cm.shape[0]
    values = []
    for c in range(k):
        tp = cm[c, c]
        row = cm[c].sum()
        col = cm[:, c].sum()
        if row == 0 and col == 0:
            values.append(None)
            continue
        precision = tp / col if col else 0.0
        recall = tp / row if row else 0.0
        if precision + recall == 0:
            values.append(0.0)
        else:
            values.append(2 * precision * recall / (precision + recall))
    included = [v for v in values if v is not None]
    return values, float(np.mean(included)), float(np.std(included))


class TestConfusion:
    def test_perfect_predictions_diagonal(self):
        labels = np.array([0, 1, 2, 1, 0])
        cm = confusion(labels, labels, 3)
        np.testing.assert_array_equal(cm, np.diag([2, 2, 1]))

    def test_empty_input_is_zero_matrix(self):
        cm = confusion([], [], 3)
        np.testing.assert_array_equal(cm, np.zeros((3, 3)))

    def test_random_case_against_loop_oracle(self, rng):
        true = rng.integers(0, 6, size=100)
        pred = rng.integers(0, 6, size=100)
        np.testing.assert_array_equal(
            confusion(true, pred, 6), brute_force_confusion(true, pred, 6)
        )

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            confusion([0, 3], [0, 1], 3)


class TestAccuracy:
    def test_diagonal_is_one(self):
        assert accuracy(np.diag([5, 2, 9])) == 1.0

    def test_all_wrong_is_zero(self):
        assert accuracy(np.array([[0, 5], [5, 0]])) == 0.0

    def test_hand_counted(self):
        assert accuracy(np.array([[3, 1], [2, 4]])) == pytest.approx(0.7)

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            accuracy(np.zeros((3, 3)))

    def test_equals_frequency_weighted_recall(self, rng):
        for _ in range(50):
            cm = rng.integers(0, 20, size=(5, 5))
            cm[0, 0] += 1  # never fully empty
            rows = cm.sum(axis=1)
            present = rows > 0
            recalls = np.where(present, np.diag(cm) / np.maximum(rows, 1), 0.0)
            weighted = np.sum(recalls * rows) / cm.sum()
            assert abs(accuracy(cm) - weighted) < 1e-12


class TestMacroF1:
    def test_perfect_diagonal(self):
        per_class, mean, std = macro_f1(np.diag([4, 6, 2]))
        np.testing.assert_array_equal(per_class, [1.0, 1.0, 1.0])
        assert mean == 1.0 and std == 0.0

    def test_hand_computed_two_class(self):
        # class 0: P=1, R=1/2 -> F1=2/3; class 1: P=2/3, R=1 -> F1=4/5
        per_class, mean, std = macro_f1(np.array([[1, 1], [0, 2]]))
        np.testing.assert_allclose(per_class, [2 / 3, 4 / 5], atol=1e-12)
        assert mean == pytest.approx((2 / 3 + 4 / 5) / 2, abs=1e-12)
        assert std == pytest.approx(abs(4 / 5 - 2 / 3) / 2, abs=1e-12)

    def test_absent_class_excluded_with_warning(self):
        cm = np.array([[3, 0, 0], [1, 2, 0], [0, 0, 0]])
        with pytest.warns(UserWarning, match="excluded"):
            per_class, mean, _ = macro_f1(cm)
        assert np.isnan(per_class[2])
        included = per_class[:2]
        assert mean == pytest.approx(included.mean())

    def test_one_sided_zero_scores_zero(self):
        # class 1 never predicted but present in truth -> F1 = 0, not excluded
        cm = np.array([[4, 0], [2, 0]])
        per_class, _, _ = macro_f1(cm)
        assert per_class[1] == 0.0

    def test_permutation_invariance(self, rng):
        cm = rng.integers(1, 10, size=(4, 4))
        _, mean, std = macro_f1(cm)
        perm = rng.permutation(4)
        _, mean_p, std_p = macro_f1(cm[np.ix_(perm, perm)])
        assert mean == pytest.approx(mean_p, abs=1e-12)
        assert std == pytest.approx(std_p, abs=1e-12)

    def test_against_loop_oracle(self, rng):
        for _ in range(50):
            cm = rng.integers(0, 8, size=(5, 5))
            cm[2, 2] += 1
            oracle_values, oracle_mean, oracle_std = brute_force_macro_f1(cm)
            if any(v is None for v in oracle_values):
                with pytest.warns(UserWarning):
                    per_class, mean, std = macro_f1(cm)
            else:
                per_class, mean, std = macro_f1(cm)
            for ours, ref in zip(per_class, oracle_values):
                if ref is None:
                    assert np.isnan(ours)
                else:
                    assert abs(ours - ref) < 1e-12
            assert abs(mean - oracle_mean) < 1e-12
            assert abs(std - oracle_std) < 1e-12


class TestCir:
    def test_all_detected(self):
        predicted = np.repeat([0, 1, 2], 25)
        assert cir(predicted, [0, 1, 2], threshold=20) == 1.0

    def test_threshold_rule_two_of_three(self):
        # counts (25, 19, 20) against threshold 20 -> exactly 2/3
        predicted = np.concatenate([np.zeros(25), np.ones(19), np.full(20, 2)]).astype(int)
        assert cir(predicted, [0, 1, 2], threshold=20) == pytest.approx(2 / 3)

    def test_only_outlier_predictions(self):
        predicted = np.full(100, 9)
        assert cir(predicted, [0, 1, 2], threshold=20) == 0.0

    def test_monotone_in_threshold(self, rng):
        predicted = rng.integers(0, 5, size=200)
        rates = [cir(predicted, [0, 1, 2, 3, 4], threshold=t) for t in range(1, 60)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_empty_expected_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            cir([0, 1], [], threshold=1)

    def test_bad_threshold_rejected(self):
        with pytest.raises(ValueError, match=">= 1"):
            cir([0, 1], [0], threshold=0)


class TestReport:
    def test_fields_and_json_shape(self, rng):
        true = rng.integers(0, 4, size=60)
        pred = rng.integers(0, 4, size=60)
        report = compute_report(true, pred, 4, expected_clusters=[0, 1], cir_threshold=5)
        payload = report.to_dict()
        assert set(payload) == {
            "accuracy",
            "per_class_f1",
            "macro_f1_mean",
            "macro_f1_std",
            "confusion",
            "sample_count",
            "cir",
        }
        assert payload["sample_count"] == 60
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert len(payload["per_class_f1"]) == 4

    def test_random_cases_match_loop_oracles(self, rng):
        for _ in range(200):
            k = int(rng.integers(2, 11))
            n = int(rng.integers(1, 501))
            true = rng.integers(0, k, size=n)
            pred = rng.integers(0, k, size=n)
            cm = brute_force_confusion(true, pred, k)
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report = compute_report(true, pred, k)
            assert report.accuracy == pytest.approx(np.trace(cm) / n, abs=1e-12)
            _, oracle_mean, oracle_std = brute_force_macro_f1(cm)
            assert abs(report.macro_f1_mean - oracle_mean) < 1e-12
            assert abs(report.macro_f1_std - oracle_std) < 1e-12
