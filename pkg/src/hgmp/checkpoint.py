"""Deterministic binary checkpoint container.

Format: 8 magic bytes, a little-endian uint64 header length, a JSON header
(sorted keys, UTF-8), then the raw bytes of each array in header order.
Arrays are stored C-contiguous in little-endian dtypes, so writing the same
state twice yields byte-identical files. Nothing time- or host-dependent is
recorded.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"HGMPCKP1"

_DTYPES = {"float64": "<f8", "int64": "<i8"}


def write_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    """Serialize ``arrays`` with a JSON ``meta`` block to ``path``."""
    index = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise DataFormatError(f"unsupported dtype {dtype} for array {name!r}")
        arr = arr.astype(_DTYPES[dtype], copy=False)
        index.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {"meta": meta, "arrays": index}
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)
    return path


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of :func:`write_checkpoint`; returns (meta, arrays)."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"missing file: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataFormatError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: corrupt header: {exc}") from exc
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            dtype = np.dtype(_DTYPES[spec["dtype"]])
            n = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            blob = fh.read(n)
            if len(blob) != n:
                raise DataFormatError(f"{path}: truncated array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(blob, dtype=dtype).reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise DataFormatError(f"{path}: trailing bytes after last array")
    return header["meta"], arrays
