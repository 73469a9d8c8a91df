"""Detection metrics: FPR at fixed TPR, AUROC, unit-test failure counts.

Score convention throughout: larger = more in-distribution.  Thresholding
uses the exact order statistic (no interpolation) and counts ties as
accepted on both the ID and OOD side, so every reported number is a
reproducible integer rule over the score multisets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyScores
from .numerics import average_ranks


@dataclass(frozen=True)
class EvalResult:
    fpr_at_tpr: float
    auroc: float
    threshold: float
    tpr_target: float
    n_id: int
    n_ood: int


def _validate_scores(scores, name: str) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(s) == 0:
        raise EmptyScores(f"{name} score vector is empty")
    if not np.all(np.isfinite(s)):
        raise EmptyScores(f"{name} score vector contains non-finite entries")
    return s


def _accept_count(tpr_target: float, n: int) -> int:
    # ceil(tpr_target * n) on the intended rational value of the target,
    # immune to float artifacts like 0.95 * 20 = 19.000000000000004
    k = int(math.ceil(Fraction(tpr_target).limit_denominator(10**6) * n))
    return min(max(k, 1), n)


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> EvalResult:
    """False-positive rate at the threshold accepting >= tpr_target of ID.

    The threshold T is the ceil(tpr_target*n_id)-th largest ID score;
    samples scoring >= T are accepted.
    """
    ids = _validate_scores(id_scores, "ID")
    oods = _validate_scores(ood_scores, "OOD")
    if not (0.0 < tpr_target <= 1.0):
        raise ValueError("tpr_target must be in (0, 1]")
    k = _accept_count(tpr_target, len(ids))
    threshold = float(np.sort(ids)[::-1][k - 1])
    fpr = float(np.count_nonzero(oods >= threshold)) / len(oods)
    return EvalResult(
        fpr_at_tpr=fpr,
        auroc=auroc(ids, oods),
        threshold=threshold,
        tpr_target=float(tpr_target),
        n_id=len(ids),
        n_ood=len(oods),
    )


def auroc(id_scores, ood_scores) -> float:
    """Mann-Whitney AUROC with exact half-credit for ties, by rank summation."""
    ids = _validate_scores(id_scores, "ID")
    oods = _validate_scores(ood_scores, "OOD")
    n, m = len(ids), len(oods)
    ranks = average_ranks(np.concatenate([ids, oods]))
    # rank sums over half-integers are exact in double precision
    u = ranks[:n].sum() - n * (n + 1) / 2.0
    return float(u / (n * m))


def unit_test_failures(fprs, threshold: float = 0.10) -> int:
    """Count noise-set FPR values at or above the failure threshold."""
    f = np.asarray(fprs, dtype=np.float64).ravel()
    return int(np.count_nonzero(f >= threshold))


def rejected_class_coverage(id_scores, id_labels, threshold: float) -> int:
    """Number of distinct classes among ID samples rejected at the threshold."""
    s = _validate_scores(id_scores, "ID")
    y = np.asarray(id_labels).ravel()
    if len(y) != len(s):
        raise EmptyScores("labels do not match score vector length")
    return int(len(np.unique(y[s < threshold])))
