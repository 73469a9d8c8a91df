"""NPY v1.0 array container reader/writer.

Hand-rolled rather than delegated to ``numpy.load`` so that malformed
files fail with precise, typed errors naming the file and byte offset.
Only the subset of the format that feature bundles use is accepted:
little-endian ``<f4`` / ``<f8`` / ``<i8``, C order, 1-D or 2-D shapes.
"""

from __future__ import annotations

import ast
import os
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    FortranOrderUnsupported,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedShape,
)

_MAGIC = b"\x93NUMPY"
_SUPPORTED = {"<f4": np.float32, "<f8": np.float64, "<i8": np.int64}


def _parse_header(path, blob: bytes):
    """Returns (dtype_str, shape, payload_offset)."""
    if len(blob) < 6 or blob[:6] != _MAGIC:
        raise BadMagic(path, 0, "not an NPY file (bad magic bytes)")
    if len(blob) < 8:
        raise TruncatedPayload(path, len(blob), "file ends inside version field")
    if blob[6:8] != b"\x01\x00":
        raise BadMagic(path, 6, f"unsupported NPY version {blob[6]}.{blob[7]}")
    if len(blob) < 10:
        raise TruncatedPayload(path, len(blob), "file ends inside header length")
    hlen = int.from_bytes(blob[8:10], "little")
    header_end = 10 + hlen
    if len(blob) < header_end:
        raise TruncatedPayload(path, len(blob), "file ends inside header dict")
    try:
        header = ast.literal_eval(blob[10:header_end].decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise BadMagic(path, 10, f"header is not a literal dict: {exc}") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise BadMagic(path, 10, "header keys must be descr/fortran_order/shape")

    descr = header["descr"]
    if descr not in _SUPPORTED:
        raise UnsupportedDtype(path, 10, f"dtype {descr!r} not in {sorted(_SUPPORTED)}")
    if header["fortran_order"] is not False:
        raise FortranOrderUnsupported(path, 10, "fortran_order must be false")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise UnsupportedShape(path, 10, f"bad shape {shape!r}")
    if len(shape) == 0:
        raise UnsupportedShape(path, 10, "scalar shape () not supported")
    if len(shape) > 2:
        raise UnsupportedShape(path, 10, f"only 1-D/2-D arrays supported, got {shape}")
    return descr, shape, header_end


def read_header(path):
    """Parse just the header: (dtype_str, shape, payload_offset)."""
    with open(path, "rb") as fh:
        blob = fh.read(10)
        if len(blob) >= 10:
            hlen = int.from_bytes(blob[8:10], "little")
            blob += fh.read(hlen)
    return _parse_header(path, blob)


def read_array(path, widen_f4: bool = True) -> np.ndarray:
    """Load a full array; ``<f4`` payloads widen to float64 unless disabled."""
    blob = Path(path).read_bytes()
    descr, shape, offset = _parse_header(path, blob)
    dtype = np.dtype(_SUPPORTED[descr]).newbyteorder("<")
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    need = count * dtype.itemsize
    avail = len(blob) - offset
    if avail < need:
        raise TruncatedPayload(
            path, len(blob), f"payload holds {avail} bytes, expected {need}"
        )
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
    if widen_f4 and descr == "<f4":
        return arr.astype(np.float64)
    return np.ascontiguousarray(arr)


def iter_row_chunks(path, rows_per_chunk: int = 65536, widen_f4: bool = True):
    """Stream a 2-D array in row blocks without loading it whole.

    Fitting at full benchmark scale needs two passes over features that
    may not fit in RAM; this iterator supports that access pattern.
    """
    descr, shape, offset = read_header(path)
    if len(shape) != 2:
        raise UnsupportedShape(path, 10, f"chunk iteration needs a 2-D array, got {shape}")
    n, d = shape
    dtype = np.dtype(_SUPPORTED[descr]).newbyteorder("<")
    row_bytes = d * dtype.itemsize
    with open(path, "rb") as fh:
        fh.seek(offset)
        done = 0
        while done < n:
            take = min(rows_per_chunk, n - done)
            blob = fh.read(take * row_bytes)
            if len(blob) < take * row_bytes:
                raise TruncatedPayload(
                    path, offset + done * row_bytes + len(blob), "payload ends mid-chunk"
                )
            chunk = np.frombuffer(blob, dtype=dtype).reshape(take, d)
            if widen_f4 and descr == "<f4":
                chunk = chunk.astype(np.float64)
            yield done, chunk
            done += take


def atomic_write_text(path, text: str) -> None:
    """Write a text file atomically (temp + rename)."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dtype_descr(arr: np.ndarray, dtype: str | None) -> str:
    if dtype is not None:
        if dtype not in _SUPPORTED:
            raise UnsupportedDtype("<write>", 0, f"dtype {dtype!r} not supported")
        return dtype
    kind = arr.dtype.kind
    if kind == "f":
        return "<f4" if arr.dtype.itemsize == 4 else "<f8"
    if kind in "iu":
        return "<i8"
    raise UnsupportedDtype("<write>", 0, f"cannot serialize dtype {arr.dtype}")


def write_array(path, arr: np.ndarray, dtype: str | None = None) -> None:
    """Write a spec-conformant NPY v1.0 file atomically (temp + rename)."""
    arr = np.asarray(arr)
    if arr.ndim not in (1, 2):
        raise UnsupportedShape(path, 0, f"only 1-D/2-D arrays supported, got {arr.shape}")
    descr = _dtype_descr(arr, dtype)
    out = np.ascontiguousarray(arr.astype(np.dtype(_SUPPORTED[descr]).newbyteorder("<")))

    header = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (descr, out.shape)
    # pad with spaces so magic+version+len+header is a multiple of 64, end with newline
    unpadded = 10 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    blob = _MAGIC + b"\x01\x00" + len(header).to_bytes(2, "little") + header.encode("latin1")

    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.write(out.tobytes())
    os.replace(tmp, path)
