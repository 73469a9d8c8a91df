"""Controlled synthetic feature datasets for desk-scale verification.

Generates labeled Gaussian class clusters with optional per-class radial
scaling (heteroscedastic feature norms) and heavy-tailed contamination,
plus an OOD split drawn around held-out mean directions.  Everything is
deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import CounterRng


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 4
    dim: int = 8
    n_per_class: int = 100
    mean_radius: float = 4.0
    cov_kind: str = "identity"      # "identity" or "random"
    cov_scale: float = 1.0          # sigma for identity covariance sigma^2 I
    scale_law: str = "constant"     # "constant" or "loguniform"
    s_lo: float = 1.0
    s_hi: float = 1.0
    heavy_tail_fraction: float = 0.0
    heavy_tail_scale: float = 4.0
    n_id_test_per_class: int = 20
    n_ood_classes: int | None = None
    n_ood_per_class: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.dim < 1 or self.n_per_class < 1:
            raise ValueError("counts must be positive")
        if self.cov_kind not in ("identity", "random"):
            raise ValueError("cov_kind must be 'identity' or 'random'")
        if self.scale_law not in ("constant", "loguniform"):
            raise ValueError("scale_law must be 'constant' or 'loguniform'")
        if self.cov_scale <= 0 or self.s_lo <= 0 or self.s_hi <= 0 or self.heavy_tail_scale <= 0:
            raise ValueError("scales must be positive")
        if self.s_lo > self.s_hi:
            raise ValueError("s_lo must not exceed s_hi")
        if not (0.0 <= self.heavy_tail_fraction <= 1.0):
            raise ValueError("heavy_tail_fraction must be in [0, 1]")


@dataclass(frozen=True)
class SynthDataset:
    train_features: np.ndarray
    train_labels: np.ndarray
    id_test_features: np.ndarray
    id_test_labels: np.ndarray
    ood_features: np.ndarray


def _covariance_factor(spec: SynthSpec, rng: CounterRng) -> np.ndarray:
    d = spec.dim
    if spec.cov_kind == "identity":
        return spec.cov_scale * np.eye(d)
    a = rng.standard_normal((d, d))
    cov = a @ a.T / d + 0.25 * np.eye(d)
    return np.linalg.cholesky(cov * spec.cov_scale**2)


def _held_out_directions(rng: CounterRng, train_dirs: np.ndarray, n: int, dim: int,
                         min_angle: float) -> np.ndarray:
    """Unit directions at least min_angle away from every train direction."""
    cos_cap = np.cos(min_angle)
    out = []
    guard = 0
    while len(out) < n:
        cand = rng.unit_sphere(max(n, 16), dim)
        ok = (cand @ train_dirs.T).max(axis=1) < cos_cap
        out.extend(cand[ok])
        guard += 1
        if guard > 1000:
            raise RuntimeError("could not place held-out OOD directions; lower min_angle")
    return np.asarray(out[:n])


def _class_block(rng: CounterRng, mean: np.ndarray, factor: np.ndarray, radial: float,
                 n: int, heavy_fraction: float, heavy_scale: float) -> np.ndarray:
    z = rng.standard_normal((n, mean.shape[0]))
    x = radial * (mean + z @ factor.T)
    if heavy_fraction > 0.0:
        mask = rng.uniform(n) < heavy_fraction
        scale = np.exp(rng.uniform(n) * np.log(heavy_scale))
        x = np.where(mask[:, None], x * scale[:, None], x)
    return x


def generate(spec: SynthSpec) -> SynthDataset:
    """Generate {train, id_test, ood_test} from a SynthSpec; bit-stable per seed."""
    rng = CounterRng(spec.seed)
    c, d = spec.n_classes, spec.dim

    train_dirs = rng.unit_sphere(c, d)
    means = spec.mean_radius * train_dirs
    factor = _covariance_factor(spec, rng)

    if spec.scale_law == "constant":
        radials = np.full(c, spec.s_lo)
    else:
        radials = np.exp(np.log(spec.s_lo)
                         + rng.uniform(c) * (np.log(spec.s_hi) - np.log(spec.s_lo)))

    train_blocks = []
    test_blocks = []
    for ci in range(c):
        train_blocks.append(_class_block(rng, means[ci], factor, radials[ci],
                                         spec.n_per_class, spec.heavy_tail_fraction,
                                         spec.heavy_tail_scale))
        test_blocks.append(_class_block(rng, means[ci], factor, radials[ci],
                                        spec.n_id_test_per_class, spec.heavy_tail_fraction,
                                        spec.heavy_tail_scale))
    train = np.vstack(train_blocks)
    train_labels = np.repeat(np.arange(c, dtype=np.int64), spec.n_per_class)
    id_test = np.vstack(test_blocks)
    id_test_labels = np.repeat(np.arange(c, dtype=np.int64), spec.n_id_test_per_class)

    n_ood_classes = c if spec.n_ood_classes is None else spec.n_ood_classes
    min_angle = 2.0 / np.sqrt(d)
    ood_dirs = _held_out_directions(rng, train_dirs, n_ood_classes, d, min_angle)
    ood_means = spec.mean_radius * ood_dirs
    if spec.scale_law == "constant":
        ood_radials = np.full(n_ood_classes, spec.s_lo)
    else:
        ood_radials = np.exp(np.log(spec.s_lo)
                             + rng.uniform(n_ood_classes) * (np.log(spec.s_hi) - np.log(spec.s_lo)))
    ood_blocks = [
        _class_block(rng, ood_means[j], factor, ood_radials[j], spec.n_ood_per_class,
                     spec.heavy_tail_fraction, spec.heavy_tail_scale)
        for j in range(n_ood_classes)
    ]
    return SynthDataset(
        train_features=train,
        train_labels=train_labels,
        id_test_features=id_test,
        id_test_labels=id_test_labels,
        ood_features=np.vstack(ood_blocks),
    )
