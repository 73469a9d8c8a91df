"""Command-line interface.

Exit codes: 0 success, 2 input/format error, 3 numerical failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bundle import load_bundle, write_manifest
from .diagnostics import (
    alpha_sweep,
    default_qq_directions,
    norm_score_correlation,
    norm_stats,
    qq_quantiles,
    variance_deviation,
)
from .errors import (
    ConfigError,
    DegenerateDirection,
    EvalError,
    MahakitError,
    ManifestError,
    NoMethods,
    NotPSD,
    NpyFormatError,
    SingularCovariance,
)
from .fitio import load_fits, save_fits
from .gaussian import estimate_per_class_covariances, fit, l2_normalize
from .npyio import atomic_write_text, write_array
from .report import METHOD_NAMES, _Prepared, render_csv, run_eval
from .scorers import ScorerConfig
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4

_NUMERICAL = (SingularCovariance, NotPSD, DegenerateDirection)
_CONFIG = (ConfigError, NoMethods, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="mahakit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit Gaussian models and store them")
    f.add_argument("--bundle", required=True)
    f.add_argument("--normalize", choices=["on", "off", "both"], default="off")
    f.add_argument("--shrinkage", default="auto")
    f.add_argument("--out", required=True)

    s = sub.add_parser("score", help="score one test set with one method")
    s.add_argument("--bundle", required=True)
    s.add_argument("--fit", required=True)
    s.add_argument("--method", required=True)
    s.add_argument("--set", dest="ood_set", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("eval", help="full evaluation grid over all OOD sets")
    e.add_argument("--bundle", required=True)
    e.add_argument("--methods", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--csv", default=None)
    e.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("diagnose", help="distribution diagnostics")
    d.add_argument("--bundle", required=True)
    d.add_argument("--norm-stats", action="store_true")
    d.add_argument("--qq", type=int, default=None, metavar="Q")
    d.add_argument("--deviation", action="store_true")
    d.add_argument("--correlation", default=None, metavar="METHOD")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)

    a = sub.add_parser("sweep-alpha", help="FPR vs OOD feature-norm scaling")
    a.add_argument("--bundle", required=True)
    a.add_argument("--set", dest="ood_set", required=True)
    a.add_argument("--alphas", required=True)
    a.add_argument("--method", choices=["maha", "maha++"], required=True)
    a.add_argument("--out", required=True)

    g = sub.add_parser("synth", help="generate a synthetic bundle")
    g.add_argument("--spec", required=True)
    g.add_argument("--out-dir", required=True)
    return p


def _shrinkage_arg(raw: str):
    if raw == "auto":
        return "auto"
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"--shrinkage must be 'auto' or a float, got {raw!r}") from None
    if value < 0.0:
        raise ConfigError("--shrinkage must be non-negative")
    return value


def cmd_fit(args) -> int:
    shrink = _shrinkage_arg(args.shrinkage)
    bundle = load_bundle(args.bundle)
    fits = {}
    if args.normalize in ("off", "both"):
        fits["unnormalized"] = fit(bundle.train_features, bundle.train_labels,
                                   normalize=False, shrinkage_eps=shrink)
    if args.normalize in ("on", "both"):
        fits["normalized"] = fit(bundle.train_features, bundle.train_labels,
                                 normalize=True, shrinkage_eps=shrink)
    save_fits(args.out, fits)
    for variant, fitted in sorted(fits.items()):
        print(f"fit[{variant}]: C={fitted.n_classes} d={fitted.dim} "
              f"eps={fitted.shrinkage_eps:g} global_eps={fitted.global_shrinkage_eps:g}")
    return EXIT_OK


def cmd_score(args) -> int:
    if args.method not in METHOD_NAMES:
        raise ConfigError(f"unknown method {args.method!r}")
    bundle = load_bundle(args.bundle)
    if args.ood_set is None:
        features = bundle.id_test_features
        logits = bundle.id_test_logits
    else:
        if args.ood_set not in bundle.ood_features:
            raise ConfigError(f"bundle has no OOD set named {args.ood_set!r}")
        features = bundle.ood_features[args.ood_set]
        logits = bundle.ood_logits.get(args.ood_set)

    enum = METHOD_NAMES[args.method]
    if enum in ("Maha", "MahaPP", "RelMaha", "RelMahaPP"):
        fits = load_fits(args.fit)
        variant = "normalized" if enum in ("MahaPP", "RelMahaPP") else "unnormalized"
        if variant not in fits:
            raise ConfigError(f"{args.fit} holds no {variant} fit (refit with --normalize)")
        from .scorers import score_maha, score_rel_maha
        fn = score_rel_maha if enum.startswith("Rel") else score_maha
        scores = fn(fits[variant], features, variant == "normalized").scores
    else:
        prepared = _Prepared(bundle, [args.method], ScorerConfig(), args.seed)
        scores = prepared.score(enum, features, logits)
    write_array(args.out, scores, "<f8")
    print(f"wrote {len(scores)} scores to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = run_eval(args.bundle, methods, ScorerConfig(), seed=args.seed)
    atomic_write_text(args.out, report.to_json())
    if args.csv:
        atomic_write_text(args.csv, render_csv(report))
    for m in report.methods:
        avg = report.averages[m]
        print(f"{m}: avg FPR {100 * avg['fpr_at_tpr']:.1f}%  avg AUROC {100 * avg['auroc']:.1f}%")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    if not (args.norm_stats or args.qq or args.deviation or args.correlation):
        raise ConfigError("diagnose needs at least one of "
                          "--norm-stats/--qq/--deviation/--correlation")
    bundle = load_bundle(args.bundle)
    out = {}
    if args.norm_stats:
        ns = norm_stats(bundle.train_features, bundle.train_labels)
        out["norm_stats"] = {
            "class_mean": ns.class_mean.tolist(),
            "class_std": ns.class_std.tolist(),
            "class_min": ns.class_min.tolist(),
            "class_max": ns.class_max.tolist(),
            "hist_edges": ns.hist_edges.tolist(),
            "hist_counts": ns.hist_counts.tolist(),
        }
    if args.qq:
        dirs = default_qq_directions(bundle.train_features.shape[1], seed=args.seed)
        out["qq"] = [
            {
                "direction_id": pair.direction_id,
                "sample_quantiles": pair.sample_quantiles.tolist(),
                "theoretical_quantiles": pair.theoretical_quantiles.tolist(),
            }
            for pair in qq_quantiles(bundle.train_features, bundle.train_labels,
                                     dirs, n_quantiles=args.qq)
        ]
    if args.deviation:
        out["variance_deviation"] = {}
        for key, normalize in (("unnormalized", False), ("normalized", True)):
            fitted = fit(bundle.train_features, bundle.train_labels, normalize=normalize)
            feats = l2_normalize(bundle.train_features) if normalize else bundle.train_features
            per_class = estimate_per_class_covariances(feats, bundle.train_labels, fitted.means)
            rep = variance_deviation(fitted, per_class)
            out["variance_deviation"][key] = {
                "per_class": rep.per_class.tolist(),
                "mean": rep.mean,
                "shrinkage_eps": rep.shrinkage_eps,
            }
    if args.correlation:
        if args.correlation not in METHOD_NAMES:
            raise ConfigError(f"unknown method {args.correlation!r}")
        prepared = _Prepared(bundle, [args.correlation], ScorerConfig(), args.seed)
        scores = prepared.score(METHOD_NAMES[args.correlation],
                                bundle.id_test_features, bundle.id_test_logits)
        out["correlation"] = {args.correlation: norm_score_correlation(
            bundle.id_test_features, scores)}
    atomic_write_text(args.out, json.dumps(out, sort_keys=True, indent=1) + "\n")
    print(f"wrote diagnostics to {args.out}")
    return EXIT_OK


def cmd_sweep_alpha(args) -> int:
    bundle = load_bundle(args.bundle)
    if args.ood_set not in bundle.ood_features:
        raise ConfigError(f"bundle has no OOD set named {args.ood_set!r}")
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"--alphas must be a comma list of floats, got {args.alphas!r}") from None
    if not alphas:
        raise ConfigError("--alphas is empty")
    fitted = fit(bundle.train_features, bundle.train_labels,
                 normalize=args.method == "maha++")
    rows = alpha_sweep(fitted, bundle.id_test_features, bundle.ood_features[args.ood_set],
                       alphas, "MahaPP" if args.method == "maha++" else "Maha")
    lines = ["alpha,fpr"] + [f"{r.alpha:g},{r.fpr:.6f}" for r in rows]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    raw = json.loads(Path(args.spec).read_text())
    try:
        spec = SynthSpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad synth spec: {exc}") from None
    data = generate(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_array(out_dir / "train_features.npy", data.train_features, "<f8")
    write_array(out_dir / "train_labels.npy", data.train_labels, "<i8")
    write_array(out_dir / "id_test_features.npy", data.id_test_features, "<f8")
    write_array(out_dir / "id_test_labels.npy", data.id_test_labels, "<i8")
    write_array(out_dir / "ood_heldout_features.npy", data.ood_features, "<f8")
    write_manifest(out_dir / "manifest.json", {
        "train_features": "train_features.npy",
        "train_labels": "train_labels.npy",
        "id_test_features": "id_test_features.npy",
        "id_test_labels": "id_test_labels.npy",
        "ood_sets": {"heldout": {"features": "ood_heldout_features.npy"}},
        "dtypes": {"features": "<f8", "labels": "<i8"},
        "provenance": {"generator": "mahakit synth", "spec": raw},
    })
    print(f"wrote synthetic bundle to {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "fit": cmd_fit,
    "score": cmd_score,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "sweep-alpha": cmd_sweep_alpha,
    "synth": cmd_synth,
}


def _classify(exc: Exception) -> int:
    if isinstance(exc, EvalError) and exc.__cause__ is not None:
        return _classify(exc.__cause__)
    if isinstance(exc, _NUMERICAL):
        return EXIT_NUMERICAL
    if isinstance(exc, _CONFIG):
        return EXIT_CONFIG
    if isinstance(exc, (NpyFormatError, ManifestError, MahakitError, OSError,
                        json.JSONDecodeError)):
        return EXIT_INPUT
    return 1


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - single exit-code boundary
        code = _classify(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
