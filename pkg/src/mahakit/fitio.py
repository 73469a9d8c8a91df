"""Binary container for serialized Gaussian fits (`fit.bin`).

Layout: magic, u32 little-endian JSON header length, JSON header, then
raw little-endian float64 array payloads at the offsets the header
declares.  One file may hold both the normalized and unnormalized fit.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ManifestError
from .gaussian import GaussianFit

_MAGIC = b"MAHAFIT1"

_ARRAYS = (
    "means", "shared_cov", "shared_factor", "global_mean", "global_cov",
    "global_factor", "class_counts",
)


def save_fits(path, fits: dict) -> None:
    """Persist fits keyed by variant name ("normalized"/"unnormalized")."""
    header = {"fits": {}}
    payload = bytearray()
    for variant, fitted in sorted(fits.items()):
        entry = {
            "shrinkage_eps": fitted.shrinkage_eps,
            "global_shrinkage_eps": fitted.global_shrinkage_eps,
            "normalized": fitted.normalized,
            "arrays": {},
        }
        for name in _ARRAYS:
            arr = np.asarray(getattr(fitted, name))
            raw = np.ascontiguousarray(arr.astype("<f8" if arr.dtype.kind == "f" else "<i8")).tobytes()
            entry["arrays"][name] = {
                "dtype": "<f8" if arr.dtype.kind == "f" else "<i8",
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
            payload.extend(raw)
        header["fits"][variant] = entry
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(bytes(payload))
    os.replace(tmp, path)


def load_fits(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ManifestError(f"{path}: not a mahakit fit container")
        hlen = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    out = {}
    for variant, entry in header["fits"].items():
        arrays = {}
        for name, meta in entry["arrays"].items():
            raw = payload[meta["offset"]: meta["offset"] + meta["nbytes"]]
            arrays[name] = np.frombuffer(raw, dtype=meta["dtype"]).reshape(meta["shape"]).copy()
        out[variant] = GaussianFit(
            means=arrays["means"],
            shared_cov=arrays["shared_cov"],
            shared_factor=arrays["shared_factor"],
            global_mean=arrays["global_mean"],
            global_cov=arrays["global_cov"],
            global_factor=arrays["global_factor"],
            shrinkage_eps=entry["shrinkage_eps"],
            global_shrinkage_eps=entry["global_shrinkage_eps"],
            normalized=entry["normalized"],
            class_counts=arrays["class_counts"].astype(np.int64),
        )
    return out
