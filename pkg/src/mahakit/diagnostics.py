"""Distribution audits for fitted Gaussian feature models.

Answers the questions "do these features actually look Gaussian with a
shared covariance?" with concrete numbers: concentration moments of the
squared feature norm, the expected squared relative deviation of class
covariances from the shared one over uniform directions, QQ quantile
pairs against the standard normal, feature-norm statistics, norm/score
correlations, and the OOD-norm scaling sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstantInput,
    DegenerateDirection,
    DimensionMismatch,
    EmptyScores,
    NotPSD,
)
from .gaussian import (
    GaussianFit,
    PerClassCovariances,
    estimate_class_means,
    validate_features,
    validate_labels,
)
from .metrics import fpr_at_tpr
from .numerics import average_ranks, norm_ppf
from .rng import CounterRng
from .scorers import scale_features, score_maha


@dataclass(frozen=True)
class NormMoments:
    """Mean and variance of ||X||^2 for X ~ N(mu, Sigma)."""

    mean_sq_norm: float
    var_sq_norm: float

    def concentration_bound(self, eps: float) -> float:
        """Chebyshev bound: P(|sq_norm - mean| >= eps) <= var / eps^2."""
        return self.var_sq_norm / float(eps) ** 2


def gaussian_norm_moments(mu, sigma) -> NormMoments:
    """Closed-form moments of the squared norm of a Gaussian vector.

    Uses the basis-free identities mean = tr(Sigma) + ||mu||^2 and
    var = 2 tr(Sigma^2) + 4 mu^T Sigma mu, which agree with the eigenbasis
    sum of (3 lam_i^2 + 6 m_i^2 lam_i + m_i^4) - (lam_i + m_i^2)^2.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] != len(mu):
        raise DimensionMismatch(f"sigma shape {sigma.shape} does not match mu ({len(mu)})")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise DimensionMismatch("sigma must be symmetric")
    tr = float(np.trace(sigma))
    tol = 1e-10 * max(abs(tr), 1.0)
    min_eig = float(np.linalg.eigvalsh(sigma).min())
    if min_eig < -tol:
        raise NotPSD(min_eig, tol)
    mean = tr + float(mu @ mu)
    var = 2.0 * float(np.sum(sigma * sigma)) + 4.0 * float(mu @ sigma @ mu)
    return NormMoments(mean_sq_norm=mean, var_sq_norm=var)


@dataclass(frozen=True)
class DeviationReport:
    """Per-class covariance deviation scores and their mean over classes."""

    per_class: np.ndarray
    shrinkage_eps: float

    @property
    def mean(self) -> float:
        return float(self.per_class.mean())


def variance_deviation(fitted: GaussianFit, per_class: PerClassCovariances) -> DeviationReport:
    """Expected squared relative deviation of each class covariance.

    For class i with M = (shared + ridge)^{-1} (cov_i - shared), the value
    is (2 tr(M^2) + tr(M)^2) / (d (d + 2)): the sphere average of
    (u^T A u)^2 for the symmetrically whitened difference A.  The shrunk
    shared covariance is used wherever an inverse appears, with the fit's
    recorded epsilon.
    """
    d = fitted.dim
    if per_class.covs.shape[1:] != (d, d):
        raise DimensionMismatch("per-class covariance shapes do not match the fit")
    ridge = fitted.shrinkage_eps * (np.trace(fitted.shared_cov) / d)
    shrunk = fitted.shared_cov + ridge * np.eye(d)
    values = np.empty(per_class.n_classes)
    for i in range(per_class.n_classes):
        m = np.linalg.solve(shrunk, per_class.covs[i] - fitted.shared_cov)
        tr_m = np.trace(m)
        tr_m2 = float(np.sum(m * m.T))
        values[i] = (2.0 * tr_m2 + tr_m * tr_m) / (d * (d + 2))
    return DeviationReport(per_class=values, shrinkage_eps=fitted.shrinkage_eps)


@dataclass(frozen=True)
class QQPair:
    direction_id: int
    sample_quantiles: np.ndarray
    theoretical_quantiles: np.ndarray


def _weibull_quantiles(sorted_vals: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Linear interpolation of order statistics at plotting positions.

    Order statistic j (1-based) sits at probability j/(N+1); quantiles at
    other probabilities interpolate linearly, clamped at the extremes.
    """
    n = len(sorted_vals)
    h = positions * (n + 1)
    j = np.clip(np.floor(h).astype(int), 1, n)
    j_hi = np.minimum(j + 1, n)
    gamma = np.clip(h - j, 0.0, 1.0)
    lo = sorted_vals[j - 1]
    hi = sorted_vals[j_hi - 1]
    return lo + gamma * (hi - lo)


def qq_quantiles(features, labels, directions, n_quantiles: int = 99) -> list[QQPair]:
    """Sample-vs-normal quantile pairs of class-centered projections.

    Rows are centered by their class mean, projected onto each direction,
    and standardized by the per-direction empirical (divide-by-N) standard
    deviation.  Quantiles are taken at k/(Q+1), k = 1..Q.
    """
    x = validate_features(features)
    if len(x) < 2:
        raise DimensionMismatch("QQ quantiles need at least 2 samples")
    y, c = validate_labels(labels, len(x))
    means = estimate_class_means(x, y, c)
    centered = x - means[y]
    positions = np.arange(1, n_quantiles + 1) / (n_quantiles + 1)
    theo = norm_ppf(positions)
    pairs = []
    for i, u in enumerate(np.atleast_2d(np.asarray(directions, dtype=np.float64))):
        proj = centered @ u
        sd = proj.std()
        if sd * sd < 1e-30:
            raise DegenerateDirection(f"direction {i}: projected variance below 1e-30")
        sample = _weibull_quantiles(np.sort(proj / sd), positions)
        pairs.append(QQPair(direction_id=i, sample_quantiles=sample,
                            theoretical_quantiles=theo))
    return pairs


def default_qq_directions(dim: int, seed: int = 0, n_random: int = 3,
                          sigma=None) -> np.ndarray:
    """Seeded random unit directions, optionally plus extreme eigenvectors."""
    dirs = CounterRng(seed).unit_sphere(n_random, dim)
    if sigma is not None:
        _vals, vecs = np.linalg.eigh(np.asarray(sigma, dtype=np.float64))
        dirs = np.vstack([dirs, vecs[:, -1], vecs[:, 0]])
    return dirs


@dataclass(frozen=True)
class NormStats:
    class_mean: np.ndarray
    class_std: np.ndarray
    class_min: np.ndarray
    class_max: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray


def norm_stats(features, labels, n_bins: int = 100) -> NormStats:
    """Per-class feature-norm statistics plus a pooled equal-width histogram."""
    x = validate_features(features)
    y, c = validate_labels(labels, len(x))
    norms = np.linalg.norm(x, axis=1)
    cm = np.empty(c)
    cs = np.empty(c)
    cmin = np.empty(c)
    cmax = np.empty(c)
    for ci in range(c):
        v = norms[y == ci]
        if len(v) == 0:
            raise DimensionMismatch(f"class {ci} has no samples")
        cm[ci], cs[ci] = v.mean(), v.std()
        cmin[ci], cmax[ci] = v.min(), v.max()
    lo, hi = float(norms.min()), float(norms.max())
    pad = 1e-9 * max(abs(lo), 1.0)
    if hi - lo < pad:
        # (near-)identical norms: widen so equal-width binning stays valid
        hi = lo + pad
    counts, edges = np.histogram(norms, bins=n_bins, range=(lo, hi))
    return NormStats(class_mean=cm, class_std=cs, class_min=cmin, class_max=cmax,
                     hist_edges=edges, hist_counts=counts)


def norm_score_correlation(features, scores) -> dict:
    """Pearson and Spearman correlation of (feature norm, score)."""
    x = validate_features(features)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(s) != len(x):
        raise EmptyScores("scores do not match feature rows")
    norms = np.linalg.norm(x, axis=1)

    def _pearson(a, b):
        sa, sb = a.std(), b.std()
        if sa == 0.0 or sb == 0.0:
            raise ConstantInput("correlation undefined for zero-variance input")
        return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))

    return {
        "pearson": _pearson(norms, s),
        "spearman": _pearson(average_ranks(norms), average_ranks(s)),
    }


@dataclass(frozen=True)
class AlphaSweepRow:
    alpha: float
    fpr: float


def alpha_sweep(fitted: GaussianFit, id_test, ood_test, alphas,
                method: str = "Maha", tpr_target: float = 0.95) -> list[AlphaSweepRow]:
    """FPR@TPR after scaling only the OOD feature norms by each alpha."""
    if method not in ("Maha", "MahaPP"):
        raise ValueError("alpha_sweep supports Maha or MahaPP")
    normalized = method == "MahaPP"
    id_scores = score_maha(fitted, id_test, normalized).scores
    rows = []
    for alpha in alphas:
        scaled = scale_features(ood_test, float(alpha))
        ood_scores = score_maha(fitted, scaled, normalized).scores
        rows.append(AlphaSweepRow(alpha=float(alpha),
                                  fpr=fpr_at_tpr(id_scores, ood_scores, tpr_target).fpr_at_tpr))
    return rows
