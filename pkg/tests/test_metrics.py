import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mahakit.errors import EmptyScores
from mahakit.metrics import (
    auroc,
    fpr_at_tpr,
    rejected_class_coverage,
    unit_test_failures,
)
from mahakit.oracles import pair_count_auroc
from mahakit.rng import CounterRng


class TestFprAtTpr:
    def test_perfect_separation(self):
        res = fpr_at_tpr(np.arange(10, 30, dtype=float), np.arange(0.0, 5.0))
        assert res.fpr_at_tpr == 0.0

    def test_hand_enumeration(self):
        # ID 1..20, target 0.95 -> 19th largest = 2; OOD [0.5, 10.5] -> one >= 2
        res = fpr_at_tpr(np.arange(1.0, 21.0), np.array([0.5, 10.5]), 0.95)
        assert res.threshold == 2.0
        assert res.fpr_at_tpr == 0.5

    def test_identical_multisets_fpr_near_target(self):
        vals = np.linspace(0, 1, 1000)
        res = fpr_at_tpr(vals, vals.copy(), 0.95)
        # rank-count oracle: FPR = #(ood >= T)/n where T is the 950th largest ID
        expected = np.count_nonzero(vals >= res.threshold) / 1000
        assert res.fpr_at_tpr == expected
        assert abs(res.fpr_at_tpr - 0.95) <= 1.0 / 1000 + 1e-12

    def test_tpr_at_threshold_meets_target(self):
        scores = CounterRng(0).standard_normal(157)
        res = fpr_at_tpr(scores, scores + 0.1, 0.9)
        achieved = np.count_nonzero(scores >= res.threshold) / len(scores)
        assert achieved >= 0.9

    def test_empty_raises(self):
        with pytest.raises(EmptyScores):
            fpr_at_tpr(np.array([]), np.array([1.0]))
        with pytest.raises(EmptyScores):
            fpr_at_tpr(np.array([1.0]), np.array([]))

    def test_non_finite_raises(self):
        with pytest.raises(EmptyScores):
            fpr_at_tpr(np.array([np.nan, 1.0]), np.array([1.0]))

    def test_float_fuzz_on_target_times_n(self):
        # 0.95 * 20 must count as 19 accepted samples, not 20
        res = fpr_at_tpr(np.arange(1.0, 21.0), np.array([0.0]), 0.95)
        assert res.threshold == 2.0


class TestAuroc:
    def test_perfect(self):
        assert auroc([3.0, 4.0], [1.0, 2.0]) == 1.0

    def test_all_ties(self):
        assert auroc([1.0, 1.0, 1.0], [1.0, 1.0]) == 0.5

    def test_pair_enumeration(self):
        assert auroc([3.0, 1.0], [2.0]) == 0.5

    def test_matches_pair_counting_with_ties(self):
        for seed in range(30):
            rng = CounterRng(seed)
            ids = rng.integers(80, 0, 12).astype(float)
            oods = rng.integers(60, 0, 12).astype(float)
            assert auroc(ids, oods) == pair_count_auroc(ids, oods)

    def test_swap_antisymmetry(self):
        for seed in range(30):
            rng = CounterRng(seed + 1000)
            a = rng.integers(50, 0, 8).astype(float)
            b = rng.integers(40, 0, 8).astype(float)
            assert auroc(a, b) + auroc(b, a) == 1.0


class TestUnitTestFailures:
    def test_all_clean(self):
        assert unit_test_failures([0.0] * 17) == 0

    def test_boundary_inclusive(self):
        assert unit_test_failures([0.10]) == 1

    def test_hand_count(self):
        assert unit_test_failures([0.05, 0.2, 0.11]) == 2


class TestRejectedClassCoverage:
    def test_none_rejected(self):
        assert rejected_class_coverage([1.0, 2.0], [0, 1], threshold=0.5) == 0

    def test_one_rejected(self):
        assert rejected_class_coverage([0.1, 2.0], [3, 1], threshold=0.5) == 1

    def test_uniform_rejection_covers_all_classes(self):
        # 10 classes x 20 samples; lowest score in every class falls below T
        scores = np.tile(np.arange(20.0), 10)
        labels = np.repeat(np.arange(10), 20)
        assert rejected_class_coverage(scores, labels, threshold=1.0) == 10


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_property_monotone_transform_invariance(seed):
    rng = CounterRng(seed)
    ids = rng.integers(60, 0, 9).astype(float)
    oods = rng.integers(45, 0, 9).astype(float)

    def squash(x):
        return np.exp(0.3 * x) + x  # strictly increasing

    r1 = fpr_at_tpr(ids, oods, 0.9)
    r2 = fpr_at_tpr(squash(ids), squash(oods), 0.9)
    assert r1.fpr_at_tpr == r2.fpr_at_tpr
    assert auroc(ids, oods) == auroc(squash(ids), squash(oods))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000),
       st.sampled_from([(0.8, 0.95), (0.5, 0.9), (0.9, 0.99)]))
def test_property_fpr_monotone_in_target(seed, targets):
    rng = CounterRng(seed)
    ids = rng.standard_normal(70)
    oods = rng.standard_normal(50) - 0.5
    lo, hi = targets
    assert fpr_at_tpr(ids, oods, lo).fpr_at_tpr <= fpr_at_tpr(ids, oods, hi).fpr_at_tpr


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_property_bounds(seed):
    rng = CounterRng(seed)
    res = fpr_at_tpr(rng.standard_normal(31), rng.standard_normal(17))
    assert 0.0 <= res.fpr_at_tpr <= 1.0
    assert 0.0 <= res.auroc <= 1.0
