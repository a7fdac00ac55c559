"""Checkpoint persistence.

A checkpoint file is a deterministic container: magic and version, a
length-prefixed JSON header (sorted keys) describing named arrays and
carrying a metadata document, then the raw little-endian array bytes in
header order.  Identical contents serialize to identical bytes, so
save -> load -> save round-trips bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ContractError

_MAGIC = b"RSMD"
_VERSION = 1

_ALLOWED_DTYPES = {"<f8", "<f4", "<i8", "<u4"}


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<").str
        if dtype not in _ALLOWED_DTYPES:
            raise ContractError(f"unsupported checkpoint dtype {arr.dtype} for {name!r}")
        raw = arr.astype(dtype, copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"arrays": entries, "meta": meta}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    payload = b"".join(
        [_MAGIC, struct.pack("<HQ", _VERSION, len(header)), header] + blobs
    )
    tmp = path + ".tmp"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ContractError(f"{path} is not a checkpoint file")
    version, header_len = struct.unpack_from("<HQ", blob, 4)
    if version != _VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    start = 4 + 10
    header = json.loads(blob[start : start + header_len].decode("utf-8"))
    base = start + header_len
    arrays = {}
    for entry in header["arrays"]:
        raw = blob[base + entry["offset"] : base + entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()
        arrays[entry["name"]] = arr
    return arrays, header["meta"]
