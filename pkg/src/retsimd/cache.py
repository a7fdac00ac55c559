"""Generated-feature cache.

Each sample holds one live entry: the feature vectors from its most
recent generation round.  Entries are written last-writer-wins, either
purely in memory or mirrored to disk under
``<root>/<dataset>/<sample_id>/round_<n>.bin``.  The wire format is
little-endian and length-prefixed: a uint32 vector count, then per vector
a uint32 dimension followed by that many float32 values.  Features are
quantized to float32 at write time; ``put`` returns the quantized vectors
so callers can train on exactly what the cache holds.
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CacheMissError, ContractError

_ROUND_RE = re.compile(r"^round_(\d+)\.bin$")


def encode_features(features: list[np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(features))]
    for vec in features:
        arr = np.ascontiguousarray(np.asarray(vec, dtype="<f4"))
        if arr.ndim != 1:
            raise ContractError(f"feature vectors must be 1-D, got shape {arr.shape}")
        parts.append(struct.pack("<I", arr.shape[0]))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_features(blob: bytes) -> list[np.ndarray]:
    (count,) = struct.unpack_from("<I", blob, 0)
    offset = 4
    out = []
    for _ in range(count):
        (dim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += 4 * dim
        out.append(vec)
    if offset != len(blob):
        raise ContractError("trailing bytes in feature blob")
    return out


@dataclass(frozen=True)
class CacheEntry:
    round_number: int
    features: tuple[np.ndarray, ...]


def _quantize(features) -> tuple[np.ndarray, ...]:
    out = []
    for vec in features:
        arr = np.asarray(vec, dtype=np.float32).astype(np.float64)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


class FeatureCache:
    """Last-writer-wins store of generated features, keyed by sample id."""

    def __init__(self, root: str | None = None, dataset_name: str = "default"):
        if root is None:
            root = os.environ.get("RETSIMD_CACHE_DIR") or None
        self.root = root
        self.dataset_name = dataset_name
        self._mem: dict[str, CacheEntry] = {}

    def _sample_dir(self, sample_id: str) -> str:
        assert self.root is not None
        return os.path.join(self.root, self.dataset_name, sample_id)

    def put(
        self,
        sample_id: str,
        features,
        round_number: int,
        *,
        expected_k: int | None = None,
    ) -> tuple[np.ndarray, ...]:
        """Store features for one sample, replacing any previous entry.

        ``expected_k`` lets the caller enforce its configured segment
        count; the sample's effective K is what the trainer passes.
        """
        features = list(features)
        if expected_k is not None and len(features) != expected_k:
            raise ContractError(
                f"expected {expected_k} features for {sample_id!r}, got {len(features)}"
            )
        if round_number < 0:
            raise ContractError(f"round must be >= 0, got {round_number}")
        quantized = _quantize(features)
        if self.root is not None:
            sample_dir = self._sample_dir(sample_id)
            os.makedirs(sample_dir, exist_ok=True)
            final = os.path.join(sample_dir, f"round_{round_number}.bin")
            tmp = final + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(encode_features(list(quantized)))
            os.replace(tmp, final)
            for entry in os.listdir(sample_dir):
                if _ROUND_RE.match(entry) and entry != f"round_{round_number}.bin":
                    os.remove(os.path.join(sample_dir, entry))
        self._mem[sample_id] = CacheEntry(round_number, quantized)
        return quantized

    def get(self, sample_id: str) -> CacheEntry | None:
        """The live entry for a sample, or None when never written."""
        entry = self._mem.get(sample_id)
        if entry is not None:
            return entry
        if self.root is None:
            return None
        sample_dir = self._sample_dir(sample_id)
        if not os.path.isdir(sample_dir):
            return None
        rounds = []
        for name in os.listdir(sample_dir):
            m = _ROUND_RE.match(name)
            if m:
                rounds.append(int(m.group(1)))
        if not rounds:
            return None
        # After delete-on-overwrite a single round file remains; if several
        # survive (e.g. interrupted cleanup), the highest round wins.
        round_number = max(rounds)
        with open(os.path.join(sample_dir, f"round_{round_number}.bin"), "rb") as fh:
            features = decode_features(fh.read())
        entry = CacheEntry(round_number, _quantize(features))
        self._mem[sample_id] = entry
        return entry

    def require(self, sample_id: str) -> CacheEntry:
        entry = self.get(sample_id)
        if entry is None:
            raise CacheMissError(
                f"no generated features cached for sample {sample_id!r}; run a generation pass"
            )
        return entry
