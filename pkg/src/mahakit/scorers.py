"""Per-sample OOD scorers behind a single convention: larger = more ID.

Implements the Mahalanobis family (plain, normalized "++", relative, and
relative++) plus the standard post-hoc baselines operating on pre-logit
features and/or classifier logits: MSP, MaxLogit, Energy, Energy+ReAct,
KL-Matching, KNN, ViM, Cosine, SSC, Ash-s, NeCo, GMM and NNGuide.

Scorers consuming logits accept either a ModelHead (W, b) or a
precomputed logits matrix, since feature exporters may dump logits
directly.  All calibration (ReAct clip threshold, ViM principal space and
alpha, NNGuide subset) happens once per call, before any scoring.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllPrunedWarning,
    DegenerateSpectrumWarning,
    DimensionMismatch,
    FitMismatch,
    MissingHead,
    MissingTrain,
)
from .gaussian import (
    GaussianFit,
    PerClassCovariances,
    l2_normalize,
    shrunk_cholesky,
    validate_features,
)
from .numerics import logsumexp_rows, softmax_rows
from .rng import CounterRng

METHODS = (
    "MSP", "MaxLogit", "Energy", "EnergyReact", "KLMatching", "KNN", "ViM",
    "Cosine", "SSC", "AshS", "NeCo", "GMM", "NNGuide",
    "Maha", "MahaPP", "RelMaha", "RelMahaPP",
)


@dataclass(frozen=True)
class ModelHead:
    """Final linear classifier: logits = W @ phi + b."""

    W: np.ndarray  # (C, d)
    b: np.ndarray  # (C,)

    def __post_init__(self):
        w = np.asarray(self.W, dtype=np.float64)
        bb = np.asarray(self.b, dtype=np.float64)
        if w.ndim != 2 or bb.ndim != 1 or w.shape[0] != bb.shape[0]:
            raise DimensionMismatch(f"head shapes W{w.shape} b{bb.shape} inconsistent")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(bb))):
            raise DimensionMismatch("head contains non-finite entries")
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "b", bb)

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.W.T + self.b


@dataclass(frozen=True)
class ScorerConfig:
    method: str = "Maha"
    knn_k: int = 1000
    react_clip_quantile: float = 0.99
    nnguide_subset_fraction: float = 0.01
    nnguide_k: int = 10
    ash_prune_percentile: float = 90.0
    neco_explained_variance: float = 0.90
    vim_dim: int | str = "auto"
    ssc_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.knn_k < 1 or self.nnguide_k < 1:
            raise ValueError("neighbor counts must be >= 1")
        for name in ("react_clip_quantile", "nnguide_subset_fraction", "neco_explained_variance"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0, 1]")
        if not (0.0 <= self.ash_prune_percentile < 100.0):
            raise ValueError("ash_prune_percentile must be in [0, 100)")
        if self.vim_dim != "auto" and int(self.vim_dim) < 1:
            raise ValueError("vim_dim must be 'auto' or >= 1")


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    method: str
    shrinkage_eps: float | None = None
    normalized: bool | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        if not np.all(np.isfinite(s)):
            raise DimensionMismatch(f"{self.method} produced non-finite scores")
        object.__setattr__(self, "scores", s)


def _require_head(head) -> ModelHead:
    if head is None:
        raise MissingHead("this scorer needs the classifier head (W, b)")
    return head


def _logits_for(head, features, logits=None) -> np.ndarray:
    if logits is not None:
        out = np.asarray(logits, dtype=np.float64)
        if out.ndim != 2 or out.shape[0] != len(features):
            raise DimensionMismatch(f"logits shape {out.shape} does not match rows {len(features)}")
        return out
    return _require_head(head).logits(features)


# ---------------------------------------------------------------------------
# Mahalanobis family


def _min_class_sq_maha(fitted: GaussianFit, x: np.ndarray) -> np.ndarray:
    """min over classes of squared whitened distance.

    The nearest class is located with the expanded form
    ||z||^2 - 2 z.m_c + ||m_c||^2 in whitened coordinates (one (M, C)
    matmul instead of C full whitenings), then the winning distance is
    recomputed directly so values stay cancellation-free: a test row equal
    to a class mean scores exactly zero.
    """
    linv_t = np.linalg.inv(fitted.shared_factor).T
    z = x @ linv_t
    mc = fitted.means @ linv_t
    z_sq = np.einsum("ij,ij->i", z, z)
    mc_sq = np.einsum("ij,ij->i", mc, mc)

    n, c = len(x), fitted.n_classes
    best = np.empty(n)
    block = max(1, (1 << 24) // max(c, 1))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        dists = z_sq[lo:hi, None] - 2.0 * (z[lo:hi] @ mc.T) + mc_sq[None, :]
        nearest = np.argmin(dists, axis=1)
        diff = (x[lo:hi] - fitted.means[nearest]) @ linv_t
        best[lo:hi] = np.einsum("ij,ij->i", diff, diff)
    return best


def _per_class_sq_maha(fitted: GaussianFit, x: np.ndarray) -> np.ndarray:
    """Full (M, C) squared-distance matrix via direct per-class whitening."""
    linv_t = np.linalg.inv(fitted.shared_factor).T
    out = np.empty((len(x), fitted.n_classes))
    for c in range(fitted.n_classes):
        y = (x - fitted.means[c]) @ linv_t
        out[:, c] = np.einsum("ij,ij->i", y, y)
    return out


def _global_sq_maha(fitted: GaussianFit, x: np.ndarray) -> np.ndarray:
    y = (x - fitted.global_mean) @ np.linalg.inv(fitted.global_factor).T
    return np.einsum("ij,ij->i", y, y)


def _prep_test(fitted: GaussianFit, test, normalized_variant: bool) -> np.ndarray:
    if fitted.normalized != normalized_variant:
        raise FitMismatch(
            f"fit.normalized={fitted.normalized} but scorer variant normalized={normalized_variant}"
        )
    x = validate_features(test)
    if x.shape[1] != fitted.dim:
        raise DimensionMismatch(f"test dim {x.shape[1]} != fit dim {fitted.dim}")
    return l2_normalize(x) if normalized_variant else x


def score_maha(fitted: GaussianFit, test, normalized_variant: bool = False) -> ScoreVector:
    """Negative smallest squared Mahalanobis distance to any class mean.

    With ``normalized_variant=True`` (the "++" variant) test rows are
    l2-normalized before scoring and the fit must have been estimated on
    normalized features.  Zero is the maximum attainable score.
    """
    x = _prep_test(fitted, test, normalized_variant)
    scores = -_min_class_sq_maha(fitted, x)
    return ScoreVector(scores, "MahaPP" if normalized_variant else "Maha",
                       fitted.shrinkage_eps, fitted.normalized)


def score_rel_maha(fitted: GaussianFit, test, normalized_variant: bool = False) -> ScoreVector:
    """Relative Mahalanobis: class distance minus global-Gaussian distance.

    The minimum is taken over the per-class differenced quantity; since the
    global term does not depend on the class, the minimizing class is the
    nearest one under the shared covariance.
    """
    x = _prep_test(fitted, test, normalized_variant)
    d_global = _global_sq_maha(fitted, x)
    scores = -(_min_class_sq_maha(fitted, x) - d_global)
    return ScoreVector(scores, "RelMahaPP" if normalized_variant else "RelMaha",
                       fitted.shrinkage_eps, fitted.normalized)


# ---------------------------------------------------------------------------
# Logit-based baselines


def score_msp(head, test, logits=None) -> ScoreVector:
    """Maximum softmax probability, computed with max-subtraction."""
    test = validate_features(test)
    o = _logits_for(head, test, logits)
    # max softmax entry = 1 / sum(exp(o - max))
    s = 1.0 / np.sum(np.exp(o - o.max(axis=1, keepdims=True)), axis=1)
    return ScoreVector(s, "MSP")


def score_maxlogit(head, test, logits=None) -> ScoreVector:
    test = validate_features(test)
    o = _logits_for(head, test, logits)
    return ScoreVector(o.max(axis=1), "MaxLogit")


def score_energy(head, test, logits=None) -> ScoreVector:
    """Log-sum-exp of the logits (max-shifted)."""
    test = validate_features(test)
    o = _logits_for(head, test, logits)
    return ScoreVector(logsumexp_rows(o), "Energy")


def react_threshold(train_features, clip_quantile: float = 0.99) -> float:
    """Clip level: empirical quantile of the pooled train activations."""
    x = np.asarray(train_features, dtype=np.float64)
    return float(np.quantile(x.ravel(), clip_quantile))


def score_energy_react(head, test, train_features=None, clip_quantile: float = 0.99,
                       clip: float | None = None) -> ScoreVector:
    """Energy of the head applied to element-wise clipped features.

    The clip level calibrates once from the train features; callers that
    evaluate several sets can pass the precomputed ``clip`` instead.
    """
    head = _require_head(head)
    test = validate_features(test)
    if clip is None:
        if train_features is None:
            raise MissingTrain("ReAct needs train features to calibrate the clip level")
        clip = react_threshold(train_features, clip_quantile)
    o = np.minimum(test, clip) @ head.W.T + head.b
    return ScoreVector(logsumexp_rows(o), "EnergyReact", extras={"clip": clip})


def class_mean_softmax(head, train_features, train_labels, n_classes=None,
                       train_logits=None) -> np.ndarray:
    """Average softmax vector per train class (true labels)."""
    x = validate_features(train_features)
    o = _logits_for(head, x, train_logits)
    p = softmax_rows(o)
    y = np.asarray(train_labels).astype(np.int64)
    c = int(n_classes) if n_classes is not None else int(y.max()) + 1
    counts = np.bincount(y, minlength=c)
    if np.any(counts == 0):
        raise MissingTrain(f"class {int(np.flatnonzero(counts == 0)[0])} has no train samples")
    sums = np.zeros((c, p.shape[1]))
    np.add.at(sums, y, p)
    return sums / counts[:, None]


_KLM_FLOOR = 1e-12


def score_klm(head, train_features, train_labels, test, logits=None,
              train_logits=None, class_softmax=None) -> ScoreVector:
    """Negative smallest KL divergence to a class-average softmax vector.

    Probabilities are floored at 1e-12 before any logarithm.
    """
    if class_softmax is not None:
        d_c = np.asarray(class_softmax, dtype=np.float64)
    else:
        d_c = class_mean_softmax(head, train_features, train_labels, train_logits=train_logits)
    test = validate_features(test)
    p = softmax_rows(_logits_for(head, test, logits))
    p_f = np.maximum(p, _KLM_FLOOR)
    log_p = np.log(p_f)
    log_d = np.log(np.maximum(d_c, _KLM_FLOOR))
    # KL(p || d_c) = sum_k p_k (log p_k - log d_ck)
    kl = np.einsum("ik,ik->i", p_f, log_p)[:, None] - p_f @ log_d.T
    return ScoreVector(-kl.min(axis=1), "KLMatching")


# ---------------------------------------------------------------------------
# Feature-space baselines


def _kth_smallest_distance(train_n: np.ndarray, test_n: np.ndarray, k: int) -> np.ndarray:
    """Exact k-th nearest distance per test row, via direct differences.

    Direct (not Gram-expanded) arithmetic keeps tiny distances exact: a
    duplicated row yields distance 0 bit-for-bit.  Test rows are blocked
    to bound the (block, N, d) scratch buffer at ~128 MB.
    """
    n, d = train_n.shape
    block = max(1, min(len(test_n), (1 << 24) // max(n * d, 1)))
    out = np.empty(len(test_n))
    for lo in range(0, len(test_n), block):
        chunk = test_n[lo:lo + block]
        diff = chunk[:, None, :] - train_n[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        out[lo:lo + block] = np.sqrt(kth)
    return out


def score_knn(train_features, test, k: int = 1000) -> ScoreVector:
    """Negative distance to the k-th nearest l2-normalized train row (exact)."""
    train_n = l2_normalize(train_features)
    test_n = l2_normalize(test)
    if train_n.shape[1] != test_n.shape[1]:
        raise DimensionMismatch("train/test dims differ")
    if not (1 <= k <= len(train_n)):
        raise ValueError(f"k={k} out of range for N={len(train_n)}")
    return ScoreVector(-_kth_smallest_distance(train_n, test_n, k), "KNN")


def _vim_auto_dim(d: int) -> int:
    if d >= 2048:
        return 1000
    if d >= 768:
        return 512
    return int(round(d / 2))


@dataclass(frozen=True)
class VimSpace:
    u: np.ndarray          # (d,) offset
    principal: np.ndarray  # (d, D) top eigenvectors
    alpha: float
    dim: int


def fit_vim_space(head: ModelHead, train_features, vim_dim="auto",
                  train_logits=None) -> VimSpace:
    """Principal space and virtual-logit scale calibrated on train features."""
    head = _require_head(head)
    x = validate_features(train_features)
    d = x.shape[1]
    u = -np.linalg.pinv(head.W) @ head.b
    offset = x - u
    gram = offset.T @ offset
    gram = (gram + gram.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(-eigvals, kind="stable")

    dim = _vim_auto_dim(d) if vim_dim == "auto" else int(vim_dim)
    rank = int(np.count_nonzero(eigvals > max(eigvals.max(), 0.0) * 1e-12))
    if dim > rank:
        warnings.warn(
            f"requested principal dim {dim} exceeds spectrum rank {rank}; reducing",
            DegenerateSpectrumWarning,
        )
        dim = max(rank, 1)
    principal = eigvecs[:, order[:dim]]

    res_train = _vim_residual_norms(offset, principal)
    denom = res_train.sum()
    o_train = _logits_for(head, x, train_logits)
    # degenerate: train lies in the principal space up to float noise, so no
    # residual scale is calibratable; fall back to a zero virtual logit
    floor = 1e-9 * np.linalg.norm(offset, axis=1).sum()
    alpha = float(o_train.max(axis=1).sum() / denom) if denom > floor else 0.0
    return VimSpace(u=u, principal=principal, alpha=alpha, dim=dim)


def _vim_residual_norms(offset: np.ndarray, principal: np.ndarray) -> np.ndarray:
    proj = (offset @ principal) @ principal.T
    res = offset - proj
    return np.linalg.norm(res, axis=1)


def score_vim(head, train_features, test, vim_dim="auto", logits=None,
              train_logits=None, space: VimSpace | None = None) -> ScoreVector:
    """Negative softmax probability of the virtual (residual) logit."""
    head = _require_head(head)
    if space is None:
        if train_features is None:
            raise MissingTrain("ViM needs train features to fit the principal space")
        space = fit_vim_space(head, train_features, vim_dim, train_logits)
    test = validate_features(test)
    o = _logits_for(head, test, logits)
    o0 = space.alpha * _vim_residual_norms(test - space.u, space.principal)
    m = np.maximum(o.max(axis=1), o0)
    denom = np.sum(np.exp(o - m[:, None]), axis=1) + np.exp(o0 - m)
    scores = -np.exp(o0 - m) / denom
    return ScoreVector(scores, "ViM", extras={"alpha": space.alpha, "dim": space.dim})


def score_cosine(class_means, test) -> ScoreVector:
    """Maximum cosine similarity to the (unnormalized-feature) class means."""
    means = np.asarray(class_means, dtype=np.float64)
    test_n = l2_normalize(test)
    if means.ndim != 2 or means.shape[1] != test_n.shape[1]:
        raise DimensionMismatch(f"means shape {means.shape} does not match test")
    means_n = l2_normalize(means)
    return ScoreVector((test_n @ means_n.T).max(axis=1), "Cosine")


def score_ssc(head, test, scale: float = 1.0) -> ScoreVector:
    """Max softmax over scaled cosines between features and classifier rows."""
    head = _require_head(head)
    test_n = l2_normalize(test)
    w_n = l2_normalize(head.W)
    cos = test_n @ w_n.T
    return ScoreVector(softmax_rows(scale * cos).max(axis=1), "SSC")


def score_ash_s(head, test, prune_percentile: float = 90.0) -> ScoreVector:
    """Energy after Ash-s activation shaping.

    Per sample: prune activations below that sample's own percentile, then
    scale survivors by exp(s1/s2) where s1/s2 are the activation sums
    before/after pruning.
    """
    head = _require_head(head)
    x = validate_features(test)
    thr = np.percentile(x, prune_percentile, axis=1, keepdims=True)
    kept = np.where(x >= thr, x, 0.0)
    s1 = x.sum(axis=1)
    s2 = kept.sum(axis=1)
    dead = s2 == 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} sample(s) fully pruned; scoring bias-only energy",
            AllPrunedWarning,
        )
    ratio = np.where(dead, 0.0, s1 / np.where(dead, 1.0, s2))
    # signed features can make s1/s2 arbitrary; cap the exponent so shaped
    # features and logits stay finite (never binds for post-ReLU activations)
    shaped = kept * np.exp(np.clip(ratio, -300.0, 300.0))[:, None]
    shaped[dead] = 0.0
    o = shaped @ head.W.T + head.b
    return ScoreVector(logsumexp_rows(o), "AshS")


@dataclass(frozen=True)
class NecoSpace:
    mean: np.ndarray
    std: np.ndarray
    principal: np.ndarray  # (d, D)
    dim: int


def fit_neco_space(train_features, explained_variance: float = 0.90) -> NecoSpace:
    """Standardization stats and principal subspace of the train features."""
    x = validate_features(train_features)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-30, 1.0, sd)  # constant coordinates contribute zero
    xs = (x - mu) / sd
    cov = xs.T @ xs / len(xs)
    cov = (cov + cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")
    ev = np.maximum(eigvals[order], 0.0)
    total = ev.sum()
    if total <= 0.0:
        dim = len(ev)
    else:
        dim = int(np.searchsorted(np.cumsum(ev) / total, explained_variance) + 1)
        dim = min(dim, len(ev))
    return NecoSpace(mean=mu, std=sd, principal=eigvecs[:, order[:dim]], dim=dim)


def score_neco(head, train_features, test, explained_variance: float = 0.90,
               logits=None, train_logits=None,
               space: NecoSpace | None = None) -> ScoreVector:
    """Neural-collapse ratio times max-logit.

    Features are standardized by the train mean/std, projected onto the
    leading eigenvectors of the standardized train covariance covering the
    requested variance fraction; the preserved-norm ratio scales the raw
    max-logit.
    """
    if space is None:
        if train_features is None:
            raise MissingTrain("NeCo needs train features")
        space = fit_neco_space(train_features, explained_variance)
    test = validate_features(test)
    ts = (test - space.mean) / space.std
    proj = np.linalg.norm(ts @ space.principal, axis=1)
    full = np.linalg.norm(ts, axis=1)
    ratio = np.where(full < 1e-30, 1.0, proj / np.where(full < 1e-30, 1.0, full))
    o = _logits_for(head, test, logits)
    return ScoreVector(ratio * o.max(axis=1), "NeCo", extras={"dim": space.dim})


def score_gmm(fitted: GaussianFit, per_class: PerClassCovariances, test) -> ScoreVector:
    """Log density of the count-weighted per-class Gaussian mixture."""
    x = validate_features(test)
    if x.shape[1] != fitted.dim:
        raise DimensionMismatch(f"test dim {x.shape[1]} != fit dim {fitted.dim}")
    c, d = fitted.n_classes, fitted.dim
    counts = per_class.counts.astype(np.float64)
    log_w = np.log(counts / counts.sum())
    log_terms = np.empty((len(x), c))
    for ci in range(c):
        factor, _eps = shrunk_cholesky(per_class.covs[ci], "auto")
        y = (x - fitted.means[ci]) @ np.linalg.inv(factor).T
        quad = np.einsum("ij,ij->i", y, y)
        logdet = 2.0 * np.sum(np.log(np.diag(factor)))
        log_terms[:, ci] = log_w[ci] - 0.5 * (d * math.log(2.0 * math.pi) + logdet + quad)
    return ScoreVector(logsumexp_rows(log_terms), "GMM", fitted.shrinkage_eps,
                       fitted.normalized)


def nnguide_subset(n_train: int, subset_fraction: float, seed: int) -> np.ndarray:
    """Deterministic seeded subsample of ceil(fraction * N) train indices."""
    size = int(math.ceil(subset_fraction * n_train))
    return CounterRng(seed).choice_no_replace(n_train, size)


def score_nnguide(head, train_features, test, subset_fraction: float = 0.01,
                  k: int = 10, seed: int = 0, logits=None) -> ScoreVector:
    """Energy guided by the k-th nearest cosine similarity to a train subset.

    Both factors grow with in-distribution-ness, so their product keeps
    the larger-is-ID convention.
    """
    if train_features is None:
        raise MissingTrain("NNGuide needs train features")
    x = validate_features(train_features)
    idx = nnguide_subset(len(x), subset_fraction, seed)
    subset_n = l2_normalize(x[idx])
    if k > len(subset_n):
        raise ValueError(f"k={k} exceeds subset size {len(subset_n)}")
    test_n = l2_normalize(test)
    sims = test_n @ subset_n.T
    sim_k = np.partition(sims, len(subset_n) - k, axis=1)[:, len(subset_n) - k]
    energy = logsumexp_rows(_logits_for(head, np.asarray(test, dtype=np.float64), logits))
    return ScoreVector(energy * sim_k, "NNGuide", extras={"subset_size": len(idx), "k": k})


def scale_features(test, alpha: float) -> np.ndarray:
    """Multiply every row by alpha (alpha = 0 yields zero rows)."""
    x = validate_features(test)
    return x * float(alpha)
