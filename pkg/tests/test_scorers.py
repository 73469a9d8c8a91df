import math
import warnings

import numpy as np
import pytest

from mahakit.errors import (
    AllPrunedWarning,
    DegenerateSpectrumWarning,
    FitMismatch,
    MissingHead,
    MissingTrain,
    ZeroNormRow,
)
from mahakit.gaussian import GaussianFit, fit, l2_normalize
from mahakit.oracles import (
    naive_ash_s,
    naive_cosine,
    naive_energy,
    naive_energy_react,
    naive_gmm,
    naive_klm,
    naive_knn,
    naive_mahalanobis,
    naive_maxlogit,
    naive_msp,
    naive_neco,
    naive_nnguide,
    naive_rel_mahalanobis,
    naive_ssc,
    naive_vim,
)
from mahakit.gaussian import estimate_per_class_covariances
from mahakit.metrics import auroc
from mahakit.rng import CounterRng
from mahakit.scorers import (
    ModelHead,
    ScorerConfig,
    scale_features,
    score_ash_s,
    score_cosine,
    score_energy,
    score_energy_react,
    score_gmm,
    score_klm,
    score_knn,
    score_maha,
    score_maxlogit,
    score_msp,
    score_neco,
    score_nnguide,
    score_rel_maha,
    score_ssc,
    score_vim,
)

FOUR_POINTS = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 4.0]])
FOUR_LABELS = np.array([0, 0, 1, 1])


def _logit_head(c):
    """Identity-ish head so precomputed logits equal the feature rows."""
    return ModelHead(W=np.eye(c), b=np.zeros(c))


def _instance(seed, n=100, d=5, c=4, n_test=25):
    rng = CounterRng(seed)
    mus = 2.5 * rng.standard_normal((c, d))
    y = rng.integers(n, 0, c)
    y[:c] = np.arange(c)
    x = mus[y] + rng.standard_normal((n, d))
    test = mus[rng.integers(n_test, 0, c)] + rng.standard_normal((n_test, d))
    head = ModelHead(W=rng.standard_normal((c, d)), b=0.3 * rng.standard_normal(c))
    return x, y, test, head


class TestMaha:
    def test_score_zero_at_class_mean(self):
        fitted = fit(FOUR_POINTS, FOUR_LABELS)
        s = score_maha(fitted, fitted.means).scores
        assert np.allclose(s, 0.0, atol=1e-18)

    def test_identity_covariance_reduces_to_euclidean(self):
        rng = CounterRng(5)
        means = rng.standard_normal((3, 4))
        fitted = GaussianFit.from_moments(means=means, shared_cov=np.eye(4),
                                          class_counts=[5, 5, 5], shrinkage_eps=0.0)
        test = rng.standard_normal((10, 4))
        s = score_maha(fitted, test).scores
        expected = -np.min(
            ((test[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
        assert np.allclose(s, expected, rtol=1e-12, atol=1e-12)

    def test_hand_instance(self):
        fitted = fit(FOUR_POINTS, FOUR_LABELS)
        s = score_maha(fitted, np.array([[2.0, 0.0]])).scores
        assert s[0] == 0.0

    def test_fit_mismatch_refused(self):
        fitted = fit(FOUR_POINTS, FOUR_LABELS, normalize=False)
        with pytest.raises(FitMismatch):
            score_maha(fitted, FOUR_POINTS, normalized_variant=True)

    def test_plus_plus_rejects_zero_rows(self):
        x, y, _test, _head = _instance(16)
        fitted = fit(x, y, normalize=True)
        with pytest.raises(ZeroNormRow):
            score_maha(fitted, np.zeros((1, x.shape[1])), normalized_variant=True)

    def test_matches_naive_oracle(self):
        x, y, test, _head = _instance(17)
        s = score_maha(fit(x, y), test).scores
        o = naive_mahalanobis(x, y, test, 4)
        assert np.max(np.abs(s - o) / np.maximum(np.abs(o), 1e-12)) < 1e-8

    def test_plus_plus_matches_naive_on_normalized(self):
        x, y, test, _head = _instance(18)
        s = score_maha(fit(x, y, normalize=True), test, True).scores
        o = naive_mahalanobis(x, y, test, 4, normalize=True)
        assert np.max(np.abs(s - o) / np.maximum(np.abs(o), 1e-12)) < 1e-8


class TestRelMaha:
    def test_single_class_all_zero(self):
        rng = CounterRng(7)
        x = rng.standard_normal((40, 3)) + 2.0
        fitted = fit(x, np.zeros(40, dtype=int))
        s = score_rel_maha(fitted, rng.standard_normal((10, 3))).scores
        assert np.max(np.abs(s)) < 1e-9

    def test_matches_dense_inverse_oracle(self):
        x, y, test, _head = _instance(19)
        s = score_rel_maha(fit(x, y), test).scores
        o = naive_rel_mahalanobis(x, y, test, 4)
        assert np.max(np.abs(s - o) / np.maximum(np.abs(o), 1e-9)) < 1e-8

    def test_at_global_mean_global_term_vanishes(self):
        x, y, _test, _head = _instance(20)
        fitted = fit(x, y)
        s = score_rel_maha(fitted, fitted.global_mean[None, :]).scores
        per_class = -score_maha(fitted, fitted.global_mean[None, :]).scores
        assert np.allclose(s, -per_class, atol=1e-9)
        assert s[0] <= 0.0 or np.isclose(s[0], 0.0)


class TestLogitScorers:
    def test_msp_uniform(self):
        s = score_msp(None, np.zeros((1, 2)), logits=np.array([[0.0, 0.0]])).scores
        assert np.isclose(s[0], 0.5, atol=1e-15)

    def test_msp_saturation_no_overflow(self):
        s = score_msp(None, np.zeros((1, 2)), logits=np.array([[1000.0, 0.0]])).scores
        assert abs(s[0] - 1.0) < 1e-12

    def test_msp_closed_form(self):
        s = score_msp(None, np.zeros((1, 2)), logits=np.array([[math.log(2.0), 0.0]])).scores
        assert np.isclose(s[0], 2.0 / 3.0, atol=1e-15)

    def test_msp_missing_head(self):
        with pytest.raises(MissingHead):
            score_msp(None, np.zeros((1, 2)))

    def test_maxlogit_trivial(self):
        s = score_maxlogit(None, np.zeros((1, 3)), logits=np.array([[3.0, 1.0, 2.0]])).scores
        assert s[0] == 3.0

    def test_maxlogit_identity_head(self):
        s = score_maxlogit(_logit_head(2), np.array([[-1.0, -2.0]])).scores
        assert s[0] == -1.0

    def test_maxlogit_matches_naive_matvec(self):
        x, _y, test, head = _instance(21)
        s = score_maxlogit(head, test).scores
        assert np.max(np.abs(s - naive_maxlogit(head.W, head.b, test))) < 1e-9

    def test_energy_ln2(self):
        s = score_energy(None, np.zeros((1, 2)), logits=np.array([[0.0, 0.0]])).scores
        assert np.isclose(s[0], math.log(2.0), atol=1e-15)

    def test_energy_shift_stability(self):
        s = score_energy(None, np.zeros((1, 2)), logits=np.array([[1000.0, 0.0]])).scores
        assert abs(s[0] - 1000.0) < 1e-9

    def test_energy_closed_form(self):
        s = score_energy(None, np.zeros((1, 3)), logits=np.array([[1.0, 2.0, 3.0]])).scores
        assert np.isclose(s[0], 3.0 + math.log(1.0 + math.exp(-1.0) + math.exp(-2.0)),
                          atol=1e-15)

    def test_msp_energy_match_naive(self):
        x, _y, test, head = _instance(22)
        assert np.max(np.abs(score_msp(head, test).scores
                             - naive_msp(head.W, head.b, test))) < 1e-12
        assert np.max(np.abs(score_energy(head, test).scores
                             - naive_energy(head.W, head.b, test))) < 1e-12

    def test_stability_at_1e4_logits(self):
        logits = np.array([[1e4, -1e4, 0.0]])
        assert np.isfinite(score_msp(None, np.zeros((1, 3)), logits=logits).scores).all()
        assert np.isfinite(score_energy(None, np.zeros((1, 3)), logits=logits).scores).all()


class TestEnergyReact:
    def test_clip_above_all_equals_energy(self):
        x, _y, test, head = _instance(23)
        s = score_energy_react(head, test, clip=1e9).scores
        assert np.array_equal(s, score_energy(head, test).scores)

    def test_clip_zero_on_nonnegative_gives_constant(self):
        x, _y, test, head = _instance(24)
        test = np.abs(test)
        s = score_energy_react(head, test, clip=0.0).scores
        # min(phi, 0) = 0 row-wise, so logits collapse to... actually to W@0+b
        expected = score_energy(head, np.zeros_like(test)).scores
        assert np.allclose(s, expected, atol=1e-12)
        assert np.allclose(s, s[0], atol=1e-12)

    def test_matches_hand_clipped_oracle(self):
        x, _y, test, head = _instance(25)
        s = score_energy_react(head, test, train_features=x, clip_quantile=0.99).scores
        o = naive_energy_react(head.W, head.b, test, x, 0.99)
        assert np.max(np.abs(s - o)) < 1e-9

    def test_missing_train_raises(self):
        _x, _y, test, head = _instance(26)
        with pytest.raises(MissingTrain):
            score_energy_react(head, test)


class TestKLMatching:
    def test_exact_match_scores_zero(self):
        # one train sample per class makes d_c the sample's own softmax,
        # so KL(p || d_c) vanishes up to accumulation-order noise
        rng = CounterRng(31)
        train = rng.standard_normal((3, 4))
        labels = np.arange(3)
        head = ModelHead(W=rng.standard_normal((3, 4)), b=np.zeros(3))
        s = score_klm(head, train, labels, train[:1]).scores
        assert abs(s[0]) < 1e-9

    def test_uniform_reference_closed_form(self):
        d_c = np.array([[0.5, 0.5], [0.5, 0.5]])
        logits = np.array([[40.0, -40.0]])
        s = score_klm(None, None, None, np.zeros((1, 2)), logits=logits,
                      class_softmax=d_c).scores
        assert abs(s[0] + math.log(2.0)) < 1e-9

    def test_matches_naive_double_loop(self):
        x, y, test, head = _instance(32)
        s = score_klm(head, x, y, test).scores
        o = naive_klm(head.W, head.b, x, y, test, 4)
        assert np.max(np.abs(s - o)) < 1e-9


class TestKnn:
    def test_duplicate_row_scores_zero(self):
        x, _y, _test, _head = _instance(41)
        s = score_knn(x, x[3:4], k=1).scores
        assert s[0] == 0.0

    def test_k_equals_n_boundary(self):
        x, _y, test, _head = _instance(42)
        s = score_knn(x, test[:3], k=len(x)).scores
        xn = l2_normalize(x)
        tn = l2_normalize(test[:3])
        expected = [-max(np.linalg.norm(t - r) for r in xn) for t in tn]
        assert np.allclose(s, expected, atol=1e-12)

    def test_matches_full_sort_oracle(self):
        rng = CounterRng(43)
        x = rng.standard_normal((100, 4)) + 0.5
        test = rng.standard_normal((20, 4)) + 0.5
        s = score_knn(x, test, k=7).scores
        o = naive_knn(x, test, 7)
        assert np.max(np.abs(s - o)) < 1e-12


class TestViM:
    def test_zero_residual_closed_form(self):
        rng = CounterRng(51)
        d, c, dim = 6, 3, 3
        basis = np.zeros((100, d))
        basis[:, :dim] = rng.standard_normal((100, dim))
        head = ModelHead(W=rng.standard_normal((c, d)), b=np.zeros(c))
        test = np.zeros((4, d))
        test[:, :dim] = rng.standard_normal((4, dim))
        s = score_vim(head, basis, test, vim_dim=dim).scores
        o = head.logits(test)
        expected = -1.0 / (np.exp(o).sum(axis=1) + 1.0)
        assert np.allclose(s, expected, rtol=1e-8)

    def test_huge_orthogonal_residual_saturates(self):
        rng = CounterRng(52)
        d, c, dim = 6, 3, 3
        train = np.zeros((80, d))
        train[:, :dim] = rng.standard_normal((80, dim))
        train += 1e-3 * rng.standard_normal((80, d))  # tiny residual so alpha > 0
        head = ModelHead(W=rng.standard_normal((c, d)), b=np.zeros(c))
        test = np.zeros((1, d))
        test[0, dim:] = 1e4
        s = score_vim(head, train, test, vim_dim=dim).scores
        assert s[0] < -0.99

    def test_matches_naive_oracle(self):
        x, _y, test, head = _instance(53, d=6)
        s = score_vim(head, x, test, vim_dim="auto").scores
        o = naive_vim(head.W, head.b, x, test, dim=3)  # auto: round(6/2) = 3
        denom = np.maximum(np.abs(o), 1e-12)
        assert np.max(np.abs(s - o) / denom) < 1e-8

    def test_dim_beyond_rank_warns_and_reduces(self):
        rng = CounterRng(58)
        d = 6
        train = np.zeros((40, d))
        train[:, :2] = rng.standard_normal((40, 2))  # rank 2 spectrum
        head = ModelHead(W=rng.standard_normal((3, d)), b=np.zeros(3))
        with pytest.warns(DegenerateSpectrumWarning):
            out = score_vim(head, train, train[:4], vim_dim=5)
        assert out.extras["dim"] <= 3  # rank 2 (+u offset can add one)


class TestCosine:
    def test_parallel_gives_one(self):
        means = np.array([[1.0, 1.0], [1.0, -1.0]])
        s = score_cosine(means, np.array([[2.0, 2.0]])).scores
        assert np.isclose(s[0], 1.0, atol=1e-12)

    def test_orthogonal_gives_zero(self):
        means = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        s = score_cosine(means, np.array([[0.0, 0.0, 5.0]])).scores
        assert np.isclose(s[0], 0.0, atol=1e-12)

    def test_hand_instance_matches_oracle(self):
        means = np.array([[2.0, 0.0], [0.0, 3.0]])
        test = np.array([[1.0, 1.0], [-1.0, 2.0]])
        s = score_cosine(means, test).scores
        assert np.max(np.abs(s - naive_cosine(means, test))) < 1e-12


class TestSsc:
    def test_aligned_antipodal_closed_form(self):
        w = np.array([[1.0, 0.0], [-1.0, 0.0]])
        head = ModelHead(W=w, b=np.zeros(2))
        s = score_ssc(head, np.array([[3.0, 0.0]])).scores
        expected = math.exp(1.0) / (math.exp(1.0) + math.exp(-1.0))
        assert np.isclose(s[0], expected, atol=1e-12)

    def test_identical_rows_give_uniform(self):
        w = np.tile(np.array([[1.0, 2.0, 0.5]]), (4, 1))
        head = ModelHead(W=w, b=np.zeros(4))
        s = score_ssc(head, CounterRng(0).standard_normal((6, 3))).scores
        assert np.allclose(s, 0.25, atol=1e-12)

    def test_matches_naive(self):
        x, _y, test, head = _instance(54)
        s = score_ssc(head, test).scores
        assert np.max(np.abs(s - naive_ssc(head.W, head.b, test))) < 1e-12


class TestAshS:
    def test_percentile_zero_preserves_energy_ranking(self):
        # percentile 0 prunes nothing, so s1 = s2 and every sample is scaled
        # by the same constant e; on rows proportional to one pattern the
        # energy ranking is the magnitude ranking under any positive scaling
        rng = CounterRng(55)
        pattern = np.array([1.0, 0.5, 0.25, 0.125])
        mags = 0.5 + rng.uniform(20) * 3.0
        test = mags[:, None] * pattern
        head = ModelHead(W=np.eye(4), b=np.zeros(4))
        s = score_ash_s(head, test, prune_percentile=0.0).scores
        e = score_energy(head, test).scores
        assert np.array_equal(np.argsort(s), np.argsort(e))
        assert np.array_equal(np.argsort(s), np.argsort(mags))

    def test_hand_pruning(self):
        head = ModelHead(W=np.eye(4), b=np.zeros(4))
        s = score_ash_s(head, np.array([[4.0, 3.0, 2.0, 1.0]]), 50.0).scores
        scale = math.exp(10.0 / 7.0)
        shaped = np.array([[4.0 * scale, 3.0 * scale, 0.0, 0.0]])
        expected = score_energy(None, shaped, logits=shaped).scores
        assert np.isclose(s[0], expected[0], atol=1e-12)

    def test_auroc_invariant_under_global_scale(self):
        x, _y, test, head = _instance(56)
        id_test, ood_test = np.abs(test[:12]) + 0.2, np.abs(test[12:]) + 0.1
        a1 = auroc(score_ash_s(head, id_test, 60).scores,
                   score_ash_s(head, ood_test, 60).scores)
        a2 = auroc(score_ash_s(head, 2.0 * id_test, 60).scores,
                   score_ash_s(head, 2.0 * ood_test, 60).scores)
        assert a1 == a2

    def test_matches_naive(self):
        x, _y, test, head = _instance(57)
        s = score_ash_s(head, test, 75.0).scores
        o = naive_ash_s(head.W, head.b, test, 75.0)
        assert np.max(np.abs(s - o)) < 1e-9

    def test_all_pruned_warns_and_scores_bias_energy(self):
        _x, _y, _test, head = _instance(59)
        zero_row = np.zeros((1, 5))
        with pytest.warns(AllPrunedWarning):
            s = score_ash_s(head, zero_row, 50.0).scores
        expected = score_energy(None, zero_row, logits=head.b[None, :]).scores
        assert np.isclose(s[0], expected[0], atol=1e-12)


class TestNeco:
    def test_full_space_equals_maxlogit(self):
        x, _y, test, head = _instance(61)
        s = score_neco(head, x, test, explained_variance=1.0).scores
        m = score_maxlogit(head, test).scores
        assert np.allclose(s, m, rtol=1e-9)

    def test_inside_principal_subspace_ratio_one(self):
        rng = CounterRng(62)
        d = 5
        x = np.zeros((200, d))
        x[:, :2] = rng.standard_normal((200, 2))
        head = ModelHead(W=rng.standard_normal((3, d)), b=np.zeros(3))
        test = np.zeros((4, d))
        test[:, :2] = rng.standard_normal((4, 2))
        s = score_neco(head, x, test, 0.90).scores
        m = score_maxlogit(head, test).scores
        assert np.allclose(s, m, rtol=1e-9)

    def test_matches_naive(self):
        x, _y, test, head = _instance(63)
        s = score_neco(head, x, test, 0.90).scores
        o = naive_neco(head.W, head.b, x, test, 0.90)
        denom = np.maximum(np.abs(o), 1e-12)
        assert np.max(np.abs(s - o) / denom) < 1e-8


class TestGmm:
    def test_single_class_peak_density(self):
        rng = CounterRng(71)
        d = 3
        x = rng.standard_normal((60, d)) * 1.5
        y = np.zeros(60, dtype=int)
        fitted = fit(x, y)
        pcc = estimate_per_class_covariances(x, y, fitted.means)
        s = score_gmm(fitted, pcc, fitted.means[:1]).scores
        cov = pcc.covs[0]
        shrunk = cov + 1e-10 * (np.trace(cov) / d) * np.eye(d)
        expected = -(d / 2) * math.log(2 * math.pi) - 0.5 * np.linalg.slogdet(shrunk)[1]
        assert np.isclose(s[0], expected, atol=1e-9)

    def test_separated_classes_far_component_negligible(self):
        rng = CounterRng(72)
        d = 3
        a = rng.standard_normal((50, d)) + 100.0
        b = rng.standard_normal((50, d)) - 100.0
        x = np.vstack([a, b])
        y = np.repeat([0, 1], 50)
        fitted = fit(x, y)
        pcc = estimate_per_class_covariances(x, y, fitted.means)
        s = score_gmm(fitted, pcc, fitted.means[:1]).scores
        cov = pcc.covs[0]
        shrunk = cov + 1e-10 * (np.trace(cov) / d) * np.eye(d)
        peak = math.log(0.5) - (d / 2) * math.log(2 * math.pi) \
            - 0.5 * np.linalg.slogdet(shrunk)[1]
        assert abs(s[0] - peak) < 1e-6

    def test_symmetric_midpoint_equal_responsibilities(self):
        # class 1 is the exact mirror of class 0, so at the midpoint the two
        # log terms are equal and the 50/50 weights cancel the log-sum-exp
        # doubling: mixture density == single-component density
        rng = CounterRng(74)
        block = rng.standard_normal((30, 2)) + np.array([3.0, 1.0])
        x = np.vstack([block, -block])
        y = np.repeat([0, 1], 30)
        fitted = fit(x, y)
        pcc = estimate_per_class_covariances(x, y, fitted.means)
        mid = np.zeros((1, 2))
        s = score_gmm(fitted, pcc, mid).scores

        one = fit(block, np.zeros(30, dtype=int))
        pcc_one = estimate_per_class_covariances(block, np.zeros(30, dtype=int), one.means)
        t = score_gmm(one, pcc_one, mid).scores
        assert np.isclose(s[0], t[0], rtol=1e-12)

    def test_matches_naive(self):
        x, y, test, _head = _instance(73)
        fitted = fit(x, y)
        pcc = estimate_per_class_covariances(x, y, fitted.means)
        s = score_gmm(fitted, pcc, test).scores
        o = naive_gmm(x, y, test, 4)
        denom = np.maximum(np.abs(o), 1e-12)
        assert np.max(np.abs(s - o) / denom) < 1e-8


class TestNNGuide:
    def test_full_subset_duplicate_row_gives_energy(self):
        # sign-convention completion: the guidance term is the k-th nearest
        # cosine similarity, so a duplicated row guides with factor 1
        x, _y, _test, head = _instance(81)
        s = score_nnguide(head, x, x[5:6], subset_fraction=1.0, k=1, seed=0).scores
        e = score_energy(head, x[5:6]).scores
        assert np.isclose(s[0], e[0], atol=1e-12)

    def test_seed_determinism(self):
        x, _y, test, head = _instance(82)
        a = score_nnguide(head, x, test, 0.25, 3, seed=5).scores
        b = score_nnguide(head, x, test, 0.25, 3, seed=5).scores
        assert np.array_equal(a, b)

    def test_matches_explicit_subset_oracle(self):
        x, _y, test, head = _instance(83)
        s = score_nnguide(head, x, test, 0.3, 4, seed=11).scores
        o = naive_nnguide(head.W, head.b, x, test, 0.3, 4, 11)
        assert np.max(np.abs(s - o)) < 1e-12


class TestScaleFeatures:
    def test_identity(self):
        x = CounterRng(0).standard_normal((5, 3))
        assert np.array_equal(scale_features(x, 1.0), x)

    def test_doubling(self):
        assert np.array_equal(scale_features(np.array([[1.0, 1.0]]), 2.0),
                              np.array([[2.0, 2.0]]))

    def test_mahapp_invariant_under_positive_scaling(self):
        x, y, test, _head = _instance(84)
        fitted = fit(x, y, normalize=True)
        base = score_maha(fitted, test, True).scores
        for alpha in (0.25, 0.5, 2.0, 4.0):
            scaled = score_maha(fitted, scale_features(test, alpha), True).scores
            assert np.max(np.abs(scaled - base)) < 1e-9


class TestInvariants:
    def test_permutation_equivariance_every_scorer(self):
        x, y, test, head = _instance(91)
        perm = np.argsort(CounterRng(1).uniform(len(test)))
        fitted = fit(x, y)
        fitted_n = fit(x, y, normalize=True)
        pcc = estimate_per_class_covariances(x, y, fitted.means)
        scorers = [
            lambda t: score_maha(fitted, t).scores,
            lambda t: score_maha(fitted_n, t, True).scores,
            lambda t: score_rel_maha(fitted, t).scores,
            lambda t: score_rel_maha(fitted_n, t, True).scores,
            lambda t: score_msp(head, t).scores,
            lambda t: score_maxlogit(head, t).scores,
            lambda t: score_energy(head, t).scores,
            lambda t: score_energy_react(head, t, train_features=x).scores,
            lambda t: score_klm(head, x, y, t).scores,
            lambda t: score_knn(x, t, 5).scores,
            lambda t: score_vim(head, x, t, vim_dim=2).scores,
            lambda t: score_cosine(fitted.means, t).scores,
            lambda t: score_ssc(head, t).scores,
            lambda t: score_ash_s(head, np.abs(t) + 0.1, 60.0).scores,
            lambda t: score_neco(head, x, t).scores,
            lambda t: score_gmm(fitted, pcc, t).scores,
            lambda t: score_nnguide(head, x, t, 0.25, 3, seed=0).scores,
        ]
        for fn in scorers:
            assert np.array_equal(fn(test)[perm], fn(test[perm]))

    def test_rotation_equivariance(self):
        x, y, test, head = _instance(92, d=5)
        q, _ = np.linalg.qr(CounterRng(3).standard_normal((5, 5)))
        xr, testr = x @ q.T, test @ q.T
        wr = head.W @ q.T
        headr = ModelHead(W=wr, b=head.b)

        f1, f2 = fit(x, y), fit(xr, y)
        for variant in (False, True):
            g1 = fit(x, y, normalize=variant) if variant else f1
            g2 = fit(xr, y, normalize=variant) if variant else f2
            a = score_maha(g1, test, variant).scores
            b = score_maha(g2, testr, variant).scores
            assert np.max(np.abs(a - b)) < 1e-8
        a = score_rel_maha(f1, test).scores
        b = score_rel_maha(f2, testr).scores
        assert np.max(np.abs(a - b)) < 1e-8
        a = score_knn(x, test, 7).scores
        b = score_knn(xr, testr, 7).scores
        assert np.max(np.abs(a - b)) < 1e-8
        a = score_cosine(f1.means, test).scores
        b = score_cosine(f2.means, testr).scores
        assert np.max(np.abs(a - b)) < 1e-8
        # logits are rotation-invariant under W -> W R
        assert np.max(np.abs(score_energy(head, test).scores
                             - score_energy(headr, testr).scores)) < 1e-8


class TestMonotoneLinks:
    def test_min_distance_argmin_invariant_to_constant_shift(self):
        # shifting all per-class distances by a constant cannot change which
        # class attains the minimum
        from mahakit.scorers import _per_class_sq_maha
        x, y, test, _head = _instance(93)
        fitted = fit(x, y)
        dists = _per_class_sq_maha(fitted, test)
        assert np.array_equal(np.argmin(dists, axis=1),
                              np.argmin(dists + 3.7, axis=1))

    def test_msp_energy_rankings_match_closed_forms(self):
        _x, _y, test, head = _instance(94)
        o = head.logits(test)
        msp_closed = np.exp(o).max(axis=1) / np.exp(o).sum(axis=1)
        energy_closed = np.log(np.exp(o).sum(axis=1))
        assert np.array_equal(np.argsort(score_msp(head, test).scores),
                              np.argsort(msp_closed))
        assert np.array_equal(np.argsort(score_energy(head, test).scores),
                              np.argsort(energy_closed))


class TestScorerConfig:
    def test_defaults_match_documented_values(self):
        cfg = ScorerConfig()
        assert cfg.knn_k == 1000
        assert cfg.react_clip_quantile == 0.99
        assert cfg.nnguide_subset_fraction == 0.01
        assert cfg.nnguide_k == 10
        assert cfg.ash_prune_percentile == 90
        assert cfg.neco_explained_variance == 0.90
        assert cfg.vim_dim == "auto"
        assert cfg.ssc_scale == 1.0

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            ScorerConfig(react_clip_quantile=1.5)

    def test_rejects_bad_method(self):
        with pytest.raises(ValueError):
            ScorerConfig(method="NotAMethod")
