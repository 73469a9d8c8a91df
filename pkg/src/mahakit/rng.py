"""Seeded, counter-based random number generation.

All stochastic pieces of the toolkit (model sampling, synthetic data,
Monte-Carlo oracles, subsampling) draw from :class:`CounterRng`, a
splitmix64 generator run in counter mode:

    raw(i) = mix64(hash(seed) + (i + 1) * GOLDEN)

where ``mix64`` is the splitmix64 finalizer.  Because every output is a
pure function of (seed, counter), streams are bit-reproducible across
platforms and independent of how draws are batched.  Normal deviates use
the Box-Muller transform on pairs of uniforms.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)

# 2^-53, one double "tick" of a 53-bit mantissa
_INV53 = float(np.ldexp(1.0, -53))


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


class CounterRng:
    """Splitmix64 counter-mode generator with Box-Muller normals."""

    def __init__(self, seed: int):
        with np.errstate(over="ignore"):
            base = _mix64(np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF)]))
        self._base = base[0]
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._base + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV53

    def standard_normal(self, shape) -> np.ndarray:
        """Standard normal deviates via Box-Muller."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        # adjacent raws feed one pair and outputs interleave, so the normal
        # stream does not depend on how draws are batched
        raws = self._raw(2 * pairs)
        u1 = ((raws[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (raws[1::2] >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(shape)

    def integers(self, n: int, low: int, high: int) -> np.ndarray:
        """n integers uniform on [low, high). Negligible modulo bias for test-scale ranges."""
        if high <= low:
            raise ValueError("empty integer range")
        u = self.uniform(n)
        return (low + np.floor(u * (high - low))).astype(np.int64)

    def choice_no_replace(self, n_total: int, size: int) -> np.ndarray:
        """Deterministic subset of `size` indices out of range(n_total).

        Implemented as the argsort of one uniform draw per index, so the
        result depends only on (seed, counter), not on `size`.
        """
        if size > n_total:
            raise ValueError("subset larger than population")
        keys = self.uniform(n_total)
        return np.sort(np.argsort(keys, kind="stable")[:size])

    def unit_sphere(self, n: int, dim: int) -> np.ndarray:
        """n vectors uniform on the unit sphere (normalized Gaussians)."""
        z = self.standard_normal((n, dim))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        # a zero draw has probability ~0; regenerate defensively
        bad = norms[:, 0] < 1e-300
        while np.any(bad):
            z[bad] = self.standard_normal((int(bad.sum()), dim))
            norms = np.linalg.norm(z, axis=1, keepdims=True)
            bad = norms[:, 0] < 1e-300
        return z / norms
