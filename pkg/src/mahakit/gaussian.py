"""Class-conditional Gaussian models over pre-logit feature matrices.

Estimates class means, a pooled (shared) covariance, per-class and global
covariances, and exposes whitening / sampling against the fitted model.
Covariances follow the maximum-likelihood convention (divide by N, not
N - C); all accumulation runs in float64 via a two-pass algorithm so that
float32 feature dumps with millions of rows do not lose precision.

Near-singular covariances (unavoidable once features are projected onto
the unit sphere) are handled by trace-scaled shrinkage: Cholesky factors
are taken of ``cov + eps * (tr(cov)/d) * I`` with ``eps`` auto-escalated
from 1e-10 by factors of 10 up to 1e-2.

Fitting itself runs single-threaded (dense kernels may use BLAS threads
internally) and is bit-deterministic per process configuration; completed
fits are immutable and safe to share across concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyClass, SingularCovariance, ZeroNormRow
from .rng import CounterRng

ZERO_NORM_TOL = 1e-30
AUTO_EPS_START = 1e-10
AUTO_EPS_CAP = 1e-2


def validate_features(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionMismatch(f"feature matrix must be 2-D and non-empty, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatch("feature matrix contains non-finite entries")
    return x


def validate_labels(labels, n_rows: int, n_classes: int | None = None):
    y = np.asarray(labels)
    if y.ndim != 1 or len(y) != n_rows:
        raise DimensionMismatch(f"labels must be a length-{n_rows} vector, got {y.shape}")
    y = y.astype(np.int64)
    if len(y) and y.min() < 0:
        raise DimensionMismatch("labels must be non-negative")
    c = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if len(y) and y.max() >= c:
        raise DimensionMismatch(f"label {y.max()} out of range for C={c}")
    return y, c


def l2_normalize(features) -> np.ndarray:
    """Project every row onto the unit sphere.

    Raises:
        ZeroNormRow: if any row norm falls below 1e-30.
    """
    x = validate_features(features)
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms < ZERO_NORM_TOL)
    if len(bad):
        raise ZeroNormRow(int(bad[0]))
    return x / norms[:, None]


def estimate_class_means(features, labels, n_classes: int | None = None) -> np.ndarray:
    """Per-class arithmetic means, accumulated in float64.

    Row ``c`` of the result is the mean of all feature rows labeled ``c``.
    """
    x = validate_features(features)
    y, c = validate_labels(labels, len(x), n_classes)
    counts = np.bincount(y, minlength=c)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise EmptyClass(int(empty[0]))
    order = np.argsort(y, kind="stable")
    boundaries = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sums = np.add.reduceat(x[order], boundaries, axis=0)
    return sums / counts[:, None]


def _class_order(y: np.ndarray, c: int):
    counts = np.bincount(y, minlength=c)
    order = np.argsort(y, kind="stable")
    boundaries = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return counts, order, boundaries


def estimate_shared_covariance(features, labels, means) -> np.ndarray:
    """Pooled covariance: (1/N) sum over classes of centered outer products."""
    x = validate_features(features)
    means = np.asarray(means, dtype=np.float64)
    y, c = validate_labels(labels, len(x), means.shape[0] if means.ndim == 2 else None)
    if means.ndim != 2 or means.shape[1] != x.shape[1]:
        raise DimensionMismatch(f"means shape {means.shape} does not match d={x.shape[1]}")
    centered = x - means[y]
    cov = centered.T @ centered / len(x)
    return (cov + cov.T) / 2.0


@dataclass(frozen=True)
class PerClassCovariances:
    """ML covariance per class plus the sample counts used as mixture weights."""

    covs: np.ndarray  # (C, d, d)
    counts: np.ndarray  # (C,)

    @property
    def n_classes(self) -> int:
        return self.covs.shape[0]


def estimate_per_class_covariances(features, labels, means) -> PerClassCovariances:
    """Per-class ML covariances; their count-weighted average is the shared one.

    Singleton classes are allowed and produce a zero matrix.
    """
    x = validate_features(features)
    means = np.asarray(means, dtype=np.float64)
    y, c = validate_labels(labels, len(x), means.shape[0] if means.ndim == 2 else None)
    if means.ndim != 2 or means.shape[1] != x.shape[1]:
        raise DimensionMismatch(f"means shape {means.shape} does not match d={x.shape[1]}")
    d = x.shape[1]
    counts, order, boundaries = _class_order(y, c)
    covs = np.zeros((c, d, d))
    xs = x[order]
    for ci in range(c):
        lo = boundaries[ci]
        hi = lo + counts[ci]
        if counts[ci] == 0:
            raise EmptyClass(ci)
        block = xs[lo:hi] - means[ci]
        cov = block.T @ block / counts[ci]
        covs[ci] = (cov + cov.T) / 2.0
    return PerClassCovariances(covs=covs, counts=counts.astype(np.int64))


def shrunk_cholesky(cov: np.ndarray, shrinkage_eps="auto"):
    """Lower Cholesky factor of ``cov + eps*(tr(cov)/d)*I``.

    With ``shrinkage_eps="auto"`` the ridge escalates 1e-10 -> 1e-2 in
    factors of 10 until factorization succeeds.

    Returns:
        (L, applied_eps)

    Raises:
        SingularCovariance: if factorization fails at the cap (or at the
            explicitly requested eps).
    """
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    scale = float(np.trace(cov)) / d
    if shrinkage_eps == "auto":
        eps = AUTO_EPS_START
        while True:
            try:
                return np.linalg.cholesky(cov + (eps * scale) * np.eye(d)), eps
            except np.linalg.LinAlgError:
                if eps >= AUTO_EPS_CAP:
                    raise SingularCovariance(AUTO_EPS_CAP) from None
                eps = min(eps * 10.0, AUTO_EPS_CAP)
    eps = float(shrinkage_eps)
    if eps < 0:
        raise SingularCovariance(eps, "shrinkage must be non-negative")
    try:
        return np.linalg.cholesky(cov + (eps * scale) * np.eye(d)), eps
    except np.linalg.LinAlgError:
        raise SingularCovariance(eps, "explicit shrinkage too small") from None


@dataclass(frozen=True)
class GaussianFit:
    """Immutable fitted model; safe to share across concurrent readers."""

    means: np.ndarray          # (C, d)
    shared_cov: np.ndarray     # (d, d)
    shared_factor: np.ndarray  # lower-triangular L, L L^T = shared_cov + ridge
    global_mean: np.ndarray    # (d,)
    global_cov: np.ndarray     # (d, d)
    global_factor: np.ndarray
    shrinkage_eps: float
    global_shrinkage_eps: float
    normalized: bool
    class_counts: np.ndarray = field(repr=False)  # (C,)

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def from_moments(
        cls,
        means,
        shared_cov,
        class_counts,
        global_mean=None,
        global_cov=None,
        shrinkage_eps="auto",
        normalized: bool = False,
    ) -> "GaussianFit":
        """Build a fit from externally supplied moments (diagnostics plumbing)."""
        means = np.asarray(means, dtype=np.float64)
        shared_cov = np.asarray(shared_cov, dtype=np.float64)
        counts = np.asarray(class_counts, dtype=np.int64)
        n = counts.sum()
        if global_mean is None:
            global_mean = (counts[:, None] * means).sum(axis=0) / n
        global_mean = np.asarray(global_mean, dtype=np.float64)
        if global_cov is None:
            centered = means - global_mean
            between = (counts[:, None, None] * (centered[:, :, None] * centered[:, None, :])).sum(axis=0) / n
            global_cov = shared_cov + between
        global_cov = np.asarray(global_cov, dtype=np.float64)
        factor, eps = shrunk_cholesky(shared_cov, shrinkage_eps)
        gfactor, geps = shrunk_cholesky(global_cov, shrinkage_eps)
        return cls(
            means=means, shared_cov=shared_cov, shared_factor=factor,
            global_mean=global_mean, global_cov=global_cov, global_factor=gfactor,
            shrinkage_eps=eps, global_shrinkage_eps=geps,
            normalized=normalized, class_counts=counts,
        )


def fit(features, labels, n_classes: int | None = None, normalize: bool = False,
        shrinkage_eps="auto") -> GaussianFit:
    """Fit class means, shared covariance and the class-agnostic global Gaussian.

    With ``normalize=True`` all rows are l2-normalized first and the flag is
    recorded on the fit; scorers refuse fits whose flag disagrees with the
    variant they implement.
    """
    x = validate_features(features)
    if normalize:
        x = l2_normalize(x)
    y, c = validate_labels(labels, len(x), n_classes)
    means = estimate_class_means(x, y, c)
    shared = estimate_shared_covariance(x, y, means)
    counts = np.bincount(y, minlength=c).astype(np.int64)

    gmean = x.mean(axis=0)
    gcentered = x - gmean
    gcov = gcentered.T @ gcentered / len(x)
    gcov = (gcov + gcov.T) / 2.0

    factor, eps = shrunk_cholesky(shared, shrinkage_eps)
    gfactor, geps = shrunk_cholesky(gcov, shrinkage_eps)
    return GaussianFit(
        means=means, shared_cov=shared, shared_factor=factor,
        global_mean=gmean, global_cov=gcov, global_factor=gfactor,
        shrinkage_eps=eps, global_shrinkage_eps=geps,
        normalized=bool(normalize), class_counts=counts,
    )


def fit_streaming(features_path, labels, n_classes: int | None = None,
                  normalize: bool = False, shrinkage_eps="auto",
                  rows_per_chunk: int = 65536) -> GaussianFit:
    """Two-pass fit streamed from an on-disk array, for larger-than-RAM dumps.

    Pass 1 accumulates class sums and counts; pass 2 accumulates centered
    outer products for the shared and global covariances.  Per-chunk
    normalization and float64 accumulation match ``fit`` to accumulation
    order, so results agree with the in-memory path to ~1e-12.
    """
    from .npyio import iter_row_chunks, read_header

    y = np.asarray(labels).astype(np.int64)
    c = int(n_classes) if n_classes is not None else int(y.max()) + 1
    _descr, shape, _offset = read_header(features_path)
    if len(shape) != 2 or shape[0] != len(y):
        raise DimensionMismatch(
            f"labels length {len(y)} does not match array shape {shape}")
    n_rows = shape[0]

    sums = np.zeros((c, shape[1]))
    for start, chunk in iter_row_chunks(features_path, rows_per_chunk):
        if normalize:
            chunk = l2_normalize(chunk)
        np.add.at(sums, y[start:start + len(chunk)], chunk)
    counts = np.bincount(y, minlength=c)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise EmptyClass(int(empty[0]))
    means = sums / counts[:, None]
    gmean = sums.sum(axis=0) / n_rows

    d = means.shape[1]
    shared = np.zeros((d, d))
    gcov = np.zeros((d, d))
    for start, chunk in iter_row_chunks(features_path, rows_per_chunk):
        if normalize:
            chunk = l2_normalize(chunk)
        block = y[start:start + len(chunk)]
        centered = chunk - means[block]
        shared += centered.T @ centered
        gcentered = chunk - gmean
        gcov += gcentered.T @ gcentered
    shared = (shared + shared.T) / (2.0 * n_rows)
    gcov = (gcov + gcov.T) / (2.0 * n_rows)

    factor, eps = shrunk_cholesky(shared, shrinkage_eps)
    gfactor, geps = shrunk_cholesky(gcov, shrinkage_eps)
    return GaussianFit(
        means=means, shared_cov=shared, shared_factor=factor,
        global_mean=gmean, global_cov=gcov, global_factor=gfactor,
        shrinkage_eps=eps, global_shrinkage_eps=geps,
        normalized=bool(normalize), class_counts=counts.astype(np.int64),
    )


def _factor_inverse(factor: np.ndarray) -> np.ndarray:
    return np.linalg.inv(factor)


def whiten_rows(fitted: GaussianFit, x: np.ndarray, center) -> np.ndarray:
    """Whiten rows of ``x``: L^{-1} (x - mu) for a class index or "global".

    The squared row norms of the result are Mahalanobis distances under the
    shrunk covariance.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != fitted.dim:
        raise DimensionMismatch(f"expected dim {fitted.dim}, got {x.shape[1]}")
    if center == "global":
        mu, factor = fitted.global_mean, fitted.global_factor
    else:
        mu, factor = fitted.means[int(center)], fitted.shared_factor
    return (x - mu) @ _factor_inverse(factor).T


def whiten(fitted: GaussianFit, x, center) -> np.ndarray:
    return whiten_rows(fitted, np.asarray(x, dtype=np.float64)[None, :], center)[0]


def sample_from_fit(fitted: GaussianFit, class_index: int, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` samples of mu_c + L z with z standard normal.

    Deterministic: the same seed gives bit-identical output.
    """
    d = fitted.dim
    if n == 0:
        return np.zeros((0, d))
    z = CounterRng(seed).standard_normal((n, d))
    return fitted.means[int(class_index)] + z @ fitted.shared_factor.T
