"""On-disk dataset bundles: a JSON manifest with explicit array paths.

No directory-convention magic: every referenced file is named in the
manifest, with paths resolved relative to the manifest location.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .npyio import atomic_write_text, read_array, read_header

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BundleManifest:
    root: Path
    train_features: str
    train_labels: str
    id_test_features: str
    id_test_labels: str | None = None
    head_w: str | None = None
    head_b: str | None = None
    train_logits: str | None = None
    id_test_logits: str | None = None
    ood_sets: dict = field(default_factory=dict)  # name -> {"features": path[, "logits": path]}
    dtypes: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def path(self, rel: str) -> Path:
        return self.root / rel


def load_manifest(path) -> BundleManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if raw.get("format_version") != FORMAT_VERSION:
        raise ManifestError(f"unsupported manifest format_version {raw.get('format_version')!r}")
    for key in ("train_features", "train_labels", "id_test_features"):
        if key not in raw:
            raise ManifestError(f"manifest missing required key {key!r}")
    ood = raw.get("ood_sets", {})
    if not isinstance(ood, dict):
        raise ManifestError("ood_sets must be a name -> file map")
    for name, entry in ood.items():
        if not isinstance(entry, dict) or "features" not in entry:
            raise ManifestError(f"ood set {name!r} must declare a features path")
    manifest = BundleManifest(
        root=path.parent,
        train_features=raw["train_features"],
        train_labels=raw["train_labels"],
        id_test_features=raw["id_test_features"],
        id_test_labels=raw.get("id_test_labels"),
        head_w=raw.get("head_w"),
        head_b=raw.get("head_b"),
        train_logits=raw.get("train_logits"),
        id_test_logits=raw.get("id_test_logits"),
        ood_sets=ood,
        dtypes=raw.get("dtypes", {}),
        provenance=raw.get("provenance", {}),
    )
    validate_manifest(manifest)
    return manifest


def _header(manifest: BundleManifest, rel: str):
    p = manifest.path(rel)
    if not p.exists():
        raise ManifestError(f"referenced file does not exist: {p}")
    return read_header(p)


def validate_manifest(manifest: BundleManifest) -> None:
    """Check every referenced file parses and all dimensions agree."""
    _dt, train_shape, _ = _header(manifest, manifest.train_features)
    if len(train_shape) != 2:
        raise ManifestError("train_features must be a 2-D matrix")
    n, d = train_shape
    _dt, lab_shape, _ = _header(manifest, manifest.train_labels)
    if lab_shape != (n,):
        raise ManifestError(f"train_labels shape {lab_shape} does not match {n} train rows")
    _dt, id_shape, _ = _header(manifest, manifest.id_test_features)
    if len(id_shape) != 2 or id_shape[1] != d:
        raise ManifestError(f"id_test_features dim {id_shape} inconsistent with d={d}")
    if manifest.id_test_labels is not None:
        _dt, s, _ = _header(manifest, manifest.id_test_labels)
        if s != (id_shape[0],):
            raise ManifestError("id_test_labels length does not match id_test rows")
    if (manifest.head_w is None) != (manifest.head_b is None):
        raise ManifestError("head_w and head_b must be declared together")
    if manifest.head_w is not None:
        _dt, w_shape, _ = _header(manifest, manifest.head_w)
        if len(w_shape) != 2 or w_shape[1] != d:
            raise ManifestError(f"head_w shape {w_shape} inconsistent with d={d}")
        _dt, b_shape, _ = _header(manifest, manifest.head_b)
        if b_shape != (w_shape[0],):
            raise ManifestError("head_b length does not match head_w rows")
    for name, entry in manifest.ood_sets.items():
        _dt, s, _ = _header(manifest, entry["features"])
        if len(s) != 2 or s[1] != d:
            raise ManifestError(f"ood set {name!r} feature dim {s} inconsistent with d={d}")


@dataclass
class Bundle:
    """All arrays of a bundle, loaded once."""

    manifest: BundleManifest
    train_features: np.ndarray
    train_labels: np.ndarray
    id_test_features: np.ndarray
    id_test_labels: np.ndarray | None
    head_w: np.ndarray | None
    head_b: np.ndarray | None
    train_logits: np.ndarray | None
    id_test_logits: np.ndarray | None
    ood_features: dict
    ood_logits: dict


def load_bundle(manifest: BundleManifest | str | Path) -> Bundle:
    if not isinstance(manifest, BundleManifest):
        manifest = load_manifest(manifest)
    rd = lambda rel: read_array(manifest.path(rel))
    opt = lambda rel: None if rel is None else rd(rel)
    return Bundle(
        manifest=manifest,
        train_features=rd(manifest.train_features),
        train_labels=rd(manifest.train_labels).astype(np.int64),
        id_test_features=rd(manifest.id_test_features),
        id_test_labels=None if manifest.id_test_labels is None
        else rd(manifest.id_test_labels).astype(np.int64),
        head_w=opt(manifest.head_w),
        head_b=opt(manifest.head_b),
        train_logits=opt(manifest.train_logits),
        id_test_logits=opt(manifest.id_test_logits),
        ood_features={name: rd(entry["features"]) for name, entry in manifest.ood_sets.items()},
        ood_logits={name: rd(entry["logits"]) for name, entry in manifest.ood_sets.items()
                    if "logits" in entry},
    )


def write_manifest(path, entries: dict) -> None:
    """Write a manifest JSON (paths should be relative to its directory)."""
    payload = {"format_version": FORMAT_VERSION, **entries}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
