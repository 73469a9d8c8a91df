"""mahakit: post-hoc OOD detection on pre-logit features.

Fits class-conditional Gaussian models, scores samples with the
Mahalanobis family (including the l2-normalized "++" variants) and the
standard logit/feature baselines, evaluates FPR@TPR / AUROC, and audits
how Gaussian the features actually are.
"""

__version__ = "0.1.0"

from .gaussian import (  # noqa: E402,F401
    GaussianFit,
    PerClassCovariances,
    estimate_class_means,
    estimate_per_class_covariances,
    estimate_shared_covariance,
    fit,
    l2_normalize,
    sample_from_fit,
    whiten,
)
from .metrics import EvalResult, auroc, fpr_at_tpr, rejected_class_coverage, unit_test_failures  # noqa: F401
from .scorers import ModelHead, ScoreVector, ScorerConfig  # noqa: F401
from .synth import SynthSpec, generate  # noqa: F401
