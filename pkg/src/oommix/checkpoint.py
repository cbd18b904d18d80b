"""Single-file checkpoints: a JSON header followed by little-endian raw buffers.

Layout::

    8 bytes   header length H (unsigned, little-endian)
    H bytes   UTF-8 JSON: {"config": ..., "extra": ..., "tensors": [{name, dtype, shape, offset, nbytes}]}
    ...       concatenated tensor buffers; offsets are relative to the end of the header
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save(path, state: dict[str, np.ndarray], config: dict, extra: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in state:
        arr = np.ascontiguousarray(state[name])
        kind = str(arr.dtype)
        if kind not in MAGIC_DTYPES:
            raise ValueError(f"{name}: unsupported dtype {kind}")
        raw = arr.astype(MAGIC_DTYPES[kind], copy=False).tobytes()
        entries.append({"name": name, "dtype": kind, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "extra": extra or {}, "tensors": entries}, sort_keys=True).encode()
    atomic_write_bytes(path, struct.pack("<Q", len(header)) + header + b"".join(blobs))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(state, header)``."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated checkpoint")
    (hlen,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8 : 8 + hlen].decode())
    base = 8 + hlen
    state = {}
    for t in header["tensors"]:
        buf = raw[base + t["offset"] : base + t["offset"] + t["nbytes"]]
        arr = np.frombuffer(buf, dtype=MAGIC_DTYPES[t["dtype"]]).astype(t["dtype"])
        state[t["name"]] = arr.reshape(t["shape"])
    return state, header


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
