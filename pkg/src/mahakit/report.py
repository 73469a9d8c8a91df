"""End-to-end evaluation runs and their serialized reports.

``run_eval`` loads a bundle once, fits the required Gaussian models
(normalized and/or unnormalized, exactly once each), calibrates each
scorer once, scores the ID test set and every OOD set, and assembles a
per-method x per-OOD-set grid of FPR@TPR / AUROC plus an averages row,
a diagnostics block, and a full config echo.  Reports are deterministic
given (bundle, methods, config, seed); wall-clock timings live in a
separate field excluded from determinism comparisons.
"""

from __future__ import annotations

import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bundle import Bundle, load_bundle
from .diagnostics import (
    default_qq_directions,
    norm_score_correlation,
    norm_stats,
    qq_quantiles,
    variance_deviation,
)
from .errors import ConstantInput, EvalError, MissingHead, NoMethods
from .gaussian import estimate_class_means, estimate_per_class_covariances, fit
from .metrics import fpr_at_tpr, rejected_class_coverage
from .scorers import (
    ModelHead,
    ScorerConfig,
    class_mean_softmax,
    fit_neco_space,
    fit_vim_space,
    react_threshold,
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

SCHEMA_VERSION = 1

# CLI/report method names -> internal enum
METHOD_NAMES = {
    "maha": "Maha",
    "maha++": "MahaPP",
    "rmaha": "RelMaha",
    "rmaha++": "RelMahaPP",
    "msp": "MSP",
    "maxlogit": "MaxLogit",
    "energy": "Energy",
    "energy-react": "EnergyReact",
    "klm": "KLMatching",
    "knn": "KNN",
    "vim": "ViM",
    "cosine": "Cosine",
    "ssc": "SSC",
    "ash-s": "AshS",
    "neco": "NeCo",
    "gmm": "GMM",
    "nnguide": "NNGuide",
}

_NEEDS_UNNORMALIZED_FIT = {"Maha", "RelMaha", "GMM"}
_NEEDS_NORMALIZED_FIT = {"MahaPP", "RelMahaPP"}


def max_threads(requested=None) -> int:
    """Worker cap: explicit argument, else MAHAKIT_THREADS (0 = auto)."""
    if requested is None:
        raw = os.environ.get("MAHAKIT_THREADS", "0")
        try:
            requested = int(raw)
        except ValueError:
            requested = 0
    if requested <= 0:
        return min(os.cpu_count() or 1, 8)
    return requested


@dataclass(frozen=True)
class RunReport:
    schema_version: int
    toolkit_version: str
    methods: list
    ood_sets: list
    grid: dict              # method -> set -> EvalResult fields
    averages: dict          # method -> {"fpr_at_tpr", "auroc"}
    id_rejections: dict     # method -> distinct rejected ID classes (if labels known)
    config: dict
    diagnostics: dict
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunReport":
        return cls(**raw)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _percent(x: float) -> str:
    return f"{100.0 * x:.1f}"


def render_csv(report: RunReport) -> str:
    """Table-style grid: FPR and AUROC blocks in percent, one decimal."""
    out = io.StringIO()
    cols = list(report.ood_sets) + ["Avg"]
    out.write("# FPR@" + _percent(report.config["tpr_target"]) + "%TPR (percent)\n")
    out.write("method," + ",".join(cols) + "\n")
    for m in report.methods:
        row = [_percent(report.grid[m][s]["fpr_at_tpr"]) for s in report.ood_sets]
        row.append(_percent(report.averages[m]["fpr_at_tpr"]))
        out.write(m + "," + ",".join(row) + "\n")
    out.write("\n# AUROC (percent)\n")
    out.write("method," + ",".join(cols) + "\n")
    for m in report.methods:
        row = [_percent(report.grid[m][s]["auroc"]) for s in report.ood_sets]
        row.append(_percent(report.averages[m]["auroc"]))
        out.write(m + "," + ",".join(row) + "\n")
    return out.getvalue()


class _Prepared:
    """Per-run shared state: fits and one-time scorer calibrations."""

    def __init__(self, bundle: Bundle, methods: list, config: ScorerConfig, seed: int):
        self.bundle = bundle
        self.config = config
        self.seed = seed
        enums = {METHOD_NAMES[m] for m in methods}
        self.head = None
        if bundle.head_w is not None:
            self.head = ModelHead(W=bundle.head_w, b=bundle.head_b)

        self.fit_unnorm = None
        self.fit_norm = None
        if enums & _NEEDS_UNNORMALIZED_FIT:
            self.fit_unnorm = fit(bundle.train_features, bundle.train_labels, normalize=False)
        if enums & _NEEDS_NORMALIZED_FIT:
            self.fit_norm = fit(bundle.train_features, bundle.train_labels, normalize=True)

        self.per_class = None
        if "GMM" in enums:
            self.per_class = estimate_per_class_covariances(
                bundle.train_features, bundle.train_labels, self.fit_unnorm.means)

        self.cosine_means = None
        if "Cosine" in enums:
            self.cosine_means = (self.fit_unnorm.means if self.fit_unnorm is not None
                                 else estimate_class_means(bundle.train_features,
                                                           bundle.train_labels))

        self.react_clip = None
        if "EnergyReact" in enums:
            if self.head is None:
                raise MissingHead("energy-react needs a classifier head in the bundle")
            self.react_clip = react_threshold(bundle.train_features, config.react_clip_quantile)

        self.klm_class_softmax = None
        if "KLMatching" in enums:
            self.klm_class_softmax = class_mean_softmax(
                self.head, bundle.train_features, bundle.train_labels,
                train_logits=bundle.train_logits)

        self.vim_space = None
        if "ViM" in enums:
            self.vim_space = fit_vim_space(self.head, bundle.train_features,
                                           config.vim_dim, bundle.train_logits)

        self.neco_space = None
        if "NeCo" in enums:
            self.neco_space = fit_neco_space(bundle.train_features,
                                             config.neco_explained_variance)

    def score(self, enum: str, features: np.ndarray, logits=None) -> np.ndarray:
        b, cfg = self.bundle, self.config
        if enum == "Maha":
            return score_maha(self.fit_unnorm, features, False).scores
        if enum == "MahaPP":
            return score_maha(self.fit_norm, features, True).scores
        if enum == "RelMaha":
            return score_rel_maha(self.fit_unnorm, features, False).scores
        if enum == "RelMahaPP":
            return score_rel_maha(self.fit_norm, features, True).scores
        if enum == "MSP":
            return score_msp(self.head, features, logits=logits).scores
        if enum == "MaxLogit":
            return score_maxlogit(self.head, features, logits=logits).scores
        if enum == "Energy":
            return score_energy(self.head, features, logits=logits).scores
        if enum == "EnergyReact":
            return score_energy_react(self.head, features, clip=self.react_clip).scores
        if enum == "KLMatching":
            return score_klm(self.head, None, None, features, logits=logits,
                             class_softmax=self.klm_class_softmax).scores
        if enum == "KNN":
            return score_knn(b.train_features, features, cfg.knn_k).scores
        if enum == "ViM":
            return score_vim(self.head, None, features, logits=logits,
                             space=self.vim_space).scores
        if enum == "Cosine":
            return score_cosine(self.cosine_means, features).scores
        if enum == "SSC":
            return score_ssc(self.head, features, cfg.ssc_scale).scores
        if enum == "AshS":
            return score_ash_s(self.head, features, cfg.ash_prune_percentile).scores
        if enum == "NeCo":
            return score_neco(self.head, None, features, logits=logits,
                              space=self.neco_space).scores
        if enum == "GMM":
            return score_gmm(self.fit_unnorm, self.per_class, features).scores
        if enum == "NNGuide":
            return score_nnguide(self.head, b.train_features, features,
                                 cfg.nnguide_subset_fraction, cfg.nnguide_k,
                                 self.seed, logits=logits).scores
        raise ValueError(f"unhandled method {enum}")


def _method_eval(prepared: _Prepared, name: str, tpr_target: float):
    enum = METHOD_NAMES[name]
    b = prepared.bundle
    try:
        id_scores = prepared.score(enum, b.id_test_features, b.id_test_logits)
    except Exception as exc:
        raise EvalError(name, "<id_test>", exc) from exc
    per_set = {}
    for set_name in sorted(b.ood_features):
        try:
            ood_scores = prepared.score(enum, b.ood_features[set_name],
                                        b.ood_logits.get(set_name))
            per_set[set_name] = fpr_at_tpr(id_scores, ood_scores, tpr_target)
        except Exception as exc:
            raise EvalError(name, set_name, exc) from exc
    return name, id_scores, per_set


def run_eval(manifest, methods, config: ScorerConfig | None = None, seed: int = 0,
             tpr_target: float = 0.95, threads: int | None = None,
             include_diagnostics: bool = True) -> RunReport:
    """Evaluate the requested methods over every OOD set of a bundle."""
    t0 = time.perf_counter()
    methods = list(methods)
    if not methods:
        raise NoMethods("no methods requested")
    for m in methods:
        if m not in METHOD_NAMES:
            raise NoMethods(f"unknown method {m!r}; known: {', '.join(sorted(METHOD_NAMES))}")
    config = config or ScorerConfig()
    bundle = manifest if isinstance(manifest, Bundle) else load_bundle(manifest)
    if not bundle.ood_features:
        raise NoMethods("bundle declares no OOD sets to evaluate against")

    t_fit = time.perf_counter()
    prepared = _Prepared(bundle, methods, config, seed)
    t_score = time.perf_counter()

    workers = min(max_threads(threads), len(methods))
    results = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_method_eval, prepared, m, tpr_target) for m in methods]
            for fut in futures:
                name, id_scores, per_set = fut.result()
                results[name] = (id_scores, per_set)
    else:
        for m in methods:
            name, id_scores, per_set = _method_eval(prepared, m, tpr_target)
            results[name] = (id_scores, per_set)

    ood_names = sorted(bundle.ood_features)
    grid = {}
    averages = {}
    id_rejections = {}
    for name in methods:
        id_scores, per_set = results[name]
        grid[name] = {s: asdict(r) for s, r in per_set.items()}
        averages[name] = {
            "fpr_at_tpr": float(np.mean([per_set[s].fpr_at_tpr for s in ood_names])),
            "auroc": float(np.mean([per_set[s].auroc for s in ood_names])),
        }
        if bundle.id_test_labels is not None and ood_names:
            threshold = per_set[ood_names[0]].threshold
            id_rejections[name] = rejected_class_coverage(
                id_scores, bundle.id_test_labels, threshold)

    t_diag = time.perf_counter()
    diagnostics = {}
    if include_diagnostics:
        diagnostics = _diagnostics_block(bundle, prepared, results, seed)
    t_end = time.perf_counter()

    config_echo = {
        "methods": methods,
        "tpr_target": tpr_target,
        "seed": seed,
        "scorer": {k: v for k, v in asdict(config).items() if k != "method"},
        "shrinkage": {
            "unnormalized": None if prepared.fit_unnorm is None
            else {"shared": prepared.fit_unnorm.shrinkage_eps,
                  "global": prepared.fit_unnorm.global_shrinkage_eps},
            "normalized": None if prepared.fit_norm is None
            else {"shared": prepared.fit_norm.shrinkage_eps,
                  "global": prepared.fit_norm.global_shrinkage_eps},
        },
    }
    timings = {
        "load_s": t_fit - t0,
        "fit_s": t_score - t_fit,
        "score_s": t_diag - t_score,
        "diagnostics_s": t_end - t_diag,
        "total_s": t_end - t0,
    }
    return RunReport(
        schema_version=SCHEMA_VERSION,
        toolkit_version=__version__,
        methods=methods,
        ood_sets=ood_names,
        grid=grid,
        averages=averages,
        id_rejections=id_rejections,
        config=config_echo,
        diagnostics=diagnostics,
        timings=timings,
    )


def _diagnostics_block(bundle: Bundle, prepared: _Prepared, results: dict, seed: int) -> dict:
    train, labels = bundle.train_features, bundle.train_labels
    ns = norm_stats(train, labels)
    block = {
        "train_norm_stats": {
            "class_mean": ns.class_mean.tolist(),
            "class_std": ns.class_std.tolist(),
            "class_min": ns.class_min.tolist(),
            "class_max": ns.class_max.tolist(),
            "hist_edges": ns.hist_edges.tolist(),
            "hist_counts": ns.hist_counts.tolist(),
        },
        "variance_deviation": {},
        "qq": [],
        "norm_score_correlation": {},
    }
    for key, fitted in (("unnormalized", prepared.fit_unnorm),
                        ("normalized", prepared.fit_norm)):
        if fitted is None:
            block["variance_deviation"][key] = None
            continue
        feats = train
        from .gaussian import l2_normalize  # local to avoid import cycle at top
        if fitted.normalized:
            feats = l2_normalize(train)
        per_class = estimate_per_class_covariances(feats, labels, fitted.means)
        block["variance_deviation"][key] = variance_deviation(fitted, per_class).mean

    dirs = default_qq_directions(train.shape[1], seed=seed)
    for pair in qq_quantiles(train, labels, dirs, n_quantiles=19):
        block["qq"].append({
            "direction_id": pair.direction_id,
            "sample_quantiles": pair.sample_quantiles.tolist(),
            "theoretical_quantiles": pair.theoretical_quantiles.tolist(),
        })

    for name, (id_scores, _per_set) in results.items():
        try:
            block["norm_score_correlation"][name] = norm_score_correlation(
                bundle.id_test_features, id_scores)
        except ConstantInput:
            block["norm_score_correlation"][name] = None
    return block
