import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftcp.conformal import (
    aps_score,
    aps_score_matrix,
    calibrate,
    covered_matrix,
    evaluate,
    predict_set,
    set_size_matrix,
)


def random_prob_rows(rng, n, k):
    p = rng.random((n, k)) + 1e-9
    return p / p.sum(axis=1, keepdims=True)


def brute_force_threshold(scores, epsilon):
    """Sort-and-index oracle with exact rational quantile arithmetic."""
    ordered = sorted(scores)
    p = len(ordered)
    level = (1 - Fraction(epsilon)) * (1 + Fraction(1, p))
    if level >= 1:
        return ordered[-1]
    k = math.ceil(level * p)
    return ordered[k - 1]


class TestApsScore:
    def test_middle_label(self):
        assert aps_score([0.5, 0.3, 0.2], 1) == pytest.approx(0.8, abs=1e-12)

    def test_argmax_label_is_its_probability(self):
        row = [0.1, 0.6, 0.3]
        assert aps_score(row, 1) == pytest.approx(0.6, abs=1e-12)

    def test_uniform_row_tie_break_by_index(self):
        assert aps_score([0.25] * 4, 2) == pytest.approx(0.75, abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label"):
            aps_score([0.5, 0.5], 2)

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError, match="sums"):
            aps_score([0.5, 0.2], 0)

    def test_matrix_variant_matches_row_variant(self, rng):
        probs = random_prob_rows(rng, 50, 6)
        labels = rng.integers(6, size=50)
        got = aps_score_matrix(probs, labels)
        want = [aps_score(probs[i], labels[i]) for i in range(50)]
        np.testing.assert_allclose(got, want, atol=0)


class TestCalibrate:
    def test_small_p_returns_max(self):
        scores = [0.2, 0.9, 0.4, 0.1, 0.5]
        res = calibrate(scores, 0.1)  # level 0.9 * 1.2 = 1.08 >= 1
        assert res.threshold == 0.9
        assert res.p == 5

    def test_nineteen_scores_example(self):
        scores = [0.05 * i for i in range(1, 20)]
        res = calibrate(scores, 0.1)  # ceil(0.9 * 20) = 18 -> 18th smallest
        assert res.threshold == pytest.approx(0.90, abs=1e-12)

    def test_constant_scores(self):
        for eps in (0.01, 0.5, 0.99):
            assert calibrate([0.3] * 8, eps).threshold == 0.3

    def test_empty_and_bad_epsilon(self):
        with pytest.raises(ValueError, match="empty"):
            calibrate([], 0.1)
        with pytest.raises(ValueError, match="epsilon"):
            calibrate([0.1], 0.0)
        with pytest.raises(ValueError, match="epsilon"):
            calibrate([0.1], 1.0)

    def test_exhaustive_against_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for p in range(1, 101):
            scores = rng.random(p)
            for eps_pct in range(1, 100):
                eps = eps_pct / 100.0
                got = calibrate(scores, eps).threshold
                want = brute_force_threshold(scores.tolist(), eps)
                assert got == want, (p, eps)

    @given(
        st.integers(1, 400),
        st.floats(1e-6, 1.0 - 1e-6),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=200, deadline=None)
    def test_property_matches_oracle(self, p, eps, seed):
        scores = np.random.default_rng(seed).random(p)
        assert calibrate(scores, eps).threshold == brute_force_threshold(
            scores.tolist(), eps
        )

    def test_threshold_nondecreasing_in_coverage_level(self, rng):
        scores = rng.random(57)
        thresholds = [calibrate(scores, eps).threshold for eps in
                      (0.5, 0.3, 0.2, 0.1, 0.05, 0.01)]
        assert all(a <= b for a, b in zip(thresholds, thresholds[1:]))


class TestPredictSet:
    # expected memberships recomputed by hand from the score rule
    # {y : cumulative score of y <= threshold} on prefix sums 0.5, 0.8, 1.0
    def test_two_class_prefix(self):
        s = predict_set([0.5, 0.3, 0.2], 0.85)
        assert set(s.members.tolist()) == {0, 1}

    def test_single_class_prefix(self):
        s = predict_set([0.5, 0.3, 0.2], 0.6)
        assert s.members.tolist() == [0]

    def test_low_threshold_gives_empty_set(self):
        s = predict_set([0.2, 0.7, 0.1], 0.0)
        assert s.members.size == 0

    def test_threshold_at_top_score_keeps_argmax(self):
        s = predict_set([0.2, 0.7, 0.1], 0.7)
        assert s.members.tolist() == [1]

    def test_threshold_above_one_gives_all_classes(self):
        s = predict_set([0.5, 0.3, 0.2], 1.5)
        assert set(s.members.tolist()) == {0, 1, 2}

    def test_nested_in_threshold(self, rng):
        row = random_prob_rows(rng, 1, 8)[0]
        prev = set()
        for t in np.linspace(0.0, 1.0, 21):
            members = set(predict_set(row, t).members.tolist())
            assert prev <= members
            prev = members

    def test_matrix_variants_match_row_variant(self, rng):
        probs = random_prob_rows(rng, 40, 5)
        labels = rng.integers(5, size=40)
        for t in (0.0, 0.35, 0.8, 0.99, 1.2):
            sizes = set_size_matrix(probs, t)
            covered = covered_matrix(probs, labels, t)
            for i in range(40):
                s = predict_set(probs[i], t)
                assert s.members.size == sizes[i]
                assert (labels[i] in s.members) == covered[i]


class TestSelfConsistency:
    def test_set_at_own_score_contains_label(self, rng):
        """10^4 random rows: thresholding at a row's own score keeps the label."""
        probs = random_prob_rows(rng, 10_000, 7)
        labels = rng.integers(7, size=10_000)
        scores = aps_score_matrix(probs, labels)
        for i in range(0, 10_000, 997):  # row-level spot checks
            s = predict_set(probs[i], scores[i])
            assert labels[i] in s.members
        # vectorized over every row
        order = np.argsort(-probs, axis=1, kind="stable")
        pos = np.argmax(order == labels[:, None], axis=1)
        sizes = np.array(
            [set_size_matrix(probs[i : i + 1], scores[i])[0] for i in range(10_000)]
        )
        assert (pos < sizes).all()


class TestEvaluate:
    def test_example_report(self):
        probs = np.array([[0.6, 0.4], [0.3, 0.7], [0.8, 0.2]])
        sets = [predict_set(probs[0], 0.5, node=0),  # {0}
                predict_set(probs[1], 0.9, node=1),  # {1, 0}
                predict_set(probs[2], 1.0, node=2)]  # {0, 1}
        labels = np.array([0, 1, 1])
        report = evaluate(sets, labels, probs)
        assert report.coverage == pytest.approx(1.0)
        assert report.inefficiency == pytest.approx(5.0 / 3.0)
        assert report.accuracy == pytest.approx(2.0 / 3.0)

    def test_sizes_and_partial_coverage(self):
        probs = np.array([[0.9, 0.1], [0.9, 0.1], [0.2, 0.8]])
        labels = np.array([0, 1, 1])
        sets = [predict_set(p, 0.5, node=i) for i, p in enumerate(probs)]
        report = evaluate(sets, labels, probs)
        assert report.coverage == pytest.approx(2.0 / 3.0)
        assert report.inefficiency == pytest.approx(1.0)
        assert report.set_sizes.tolist() == [1, 1, 1]

    def test_all_classes_sets(self):
        probs = random_prob_rows(np.random.default_rng(5), 10, 4)
        labels = np.random.default_rng(6).integers(4, size=10)
        sets = [predict_set(p, 1.1, node=i) for i, p in enumerate(probs)]
        report = evaluate(sets, labels, probs)
        assert report.coverage == 1.0
        assert report.inefficiency == 4.0

    def test_empty_test_set_errors(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate([], np.array([], dtype=int), np.zeros((0, 3)))

    def test_length_mismatch(self):
        probs = np.array([[1.0, 0.0]])
        with pytest.raises(ValueError, match="mismatch"):
            evaluate([predict_set(probs[0], 0.5)], np.array([0, 1]), probs)


def test_marginal_coverage_guarantee_on_exchangeable_splits():
    """Labels drawn from the model's own rows make calibration and test
    scores exchangeable; mean coverage over 1000 random splits must sit
    within 0.02 of the nominal level (p = 500)."""
    rng = np.random.default_rng(2024)
    n = 1000
    probs = random_prob_rows(rng, n, 5)
    labels = np.array([rng.choice(5, p=row) for row in probs])
    scores = aps_score_matrix(probs, labels)
    order = np.argsort(-probs, axis=1, kind="stable")
    pos = np.argmax(order == labels[:, None], axis=1)
    cums = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)

    for eps in (0.05, 0.1):
        coverages = []
        for split in range(1000):
            perm = np.random.default_rng(split).permutation(n)
            calib, test = perm[:500], perm[500:]
            threshold = calibrate(scores[calib], eps).threshold
            sizes = 1 + (cums[test, :-1] < threshold).sum(axis=1)
            coverages.append(float((pos[test] < sizes).mean()))
        assert abs(np.mean(coverages) - (1 - eps)) < 0.02, eps
