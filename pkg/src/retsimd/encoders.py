"""Feature encoders and shared-space projections.

Hidden features z^t, z^v come from a pluggable backend per modality; a
deterministic toy backend (hash embeddings for text, patch statistics for
images) keeps everything desk-scale, and a remote HTTP adapter stands in
for real pretrained encoders.  Each hidden feature is projected into the
shared d-dimensional space by a bias-free linear map h = z W_a.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import hashing
from .errors import ContractError, RemoteBackendError

# 4x4 spatial grid; per cell and channel a mean and a variance.
_GRID = 4
_RAW_IMAGE_DIM = _GRID * _GRID * 3 * 2
_PROJECTION_KEY = "toy-image-projection"

# Padding tokens are content-free placeholders; like a production text
# encoder, the toy encoder gives them a null embedding rather than a
# hash-random direction.
PAD_TOKEN = "[PAD]"


def toy_encode_text(text, d_t: int, seed: int) -> np.ndarray:
    """Mean of seeded-hash unit token embeddings, L2-normalized.

    Pure function of (tokens, d_t, seed); stable across processes.
    All-padding text encodes to the zero vector.
    """
    tokens = tuple(text)
    if not tokens:
        raise ContractError("cannot encode empty text")
    acc = np.zeros(d_t)
    for tok in tokens:
        if tok != PAD_TOKEN:
            acc += hashing.unit_vector(d_t, "token", seed, tok)
    acc /= len(tokens)
    norm = float(np.linalg.norm(acc))
    if norm > 1e-12:
        acc /= norm
    return acc


def image_descriptor(image: np.ndarray) -> np.ndarray:
    """Per-channel mean and variance over a fixed 4x4 grid, flattened.

    Pixels are scaled to [0, 1]; output is length 96 ordered by grid row,
    grid column, channel, then (mean, variance).
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"expected HxWx3 image, got shape {img.shape}")
    if img.shape[0] < _GRID or img.shape[1] < _GRID:
        raise ContractError(f"image too small for {_GRID}x{_GRID} grid: {img.shape}")
    scaled = img.astype(np.float64) / 255.0
    rows = np.array_split(scaled, _GRID, axis=0)
    out = np.empty(_RAW_IMAGE_DIM)
    pos = 0
    for row in rows:
        for cell in np.array_split(row, _GRID, axis=1):
            for c in range(3):
                block = cell[:, :, c]
                out[pos] = block.mean()
                out[pos + 1] = block.var()
                pos += 2
    return out


@lru_cache(maxsize=32)
def _image_projection(d_v: int) -> np.ndarray:
    # Fixed seeded projection so the descriptor dimension is configurable
    # without changing the statistics computation.
    rng = hashing.rng_from(_PROJECTION_KEY, _RAW_IMAGE_DIM, d_v)
    proj = rng.standard_normal((_RAW_IMAGE_DIM, d_v)) / np.sqrt(_RAW_IMAGE_DIM)
    proj.setflags(write=False)
    return proj


def toy_encode_image(image: np.ndarray, d_v: int) -> np.ndarray:
    """Patch-statistics descriptor linearly mapped to ``d_v``, L2-normalized.

    Normalization matches the text side so image brightness changes the
    direction of the encoding, not its magnitude.
    """
    z = image_descriptor(image) @ _image_projection(d_v)
    norm = float(np.linalg.norm(z))
    if norm > 1e-12:
        z /= norm
    return z


def white_image(height: int = 224, width: int = 224) -> np.ndarray:
    """The all-white placeholder image used for absent or ablated images."""
    return np.full((height, width, 3), 255, dtype=np.uint8)


def white_reference_vector(d_v: int) -> np.ndarray:
    """The constant vector every all-white image encodes to."""
    return toy_encode_image(white_image(), d_v)


def project_shared(z: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """h = z W_a: bias-free linear map into the shared space."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (projection.shape[0],):
        raise ContractError(
            f"hidden dim {z.shape} does not match projection {projection.shape}"
        )
    return z @ projection


class ToyEncoderBackend:
    """Deterministic desk-scale encoder pair; not trainable."""

    trainable = False

    def __init__(self, text_dim: int = 32, image_dim: int = 32, seed: int = 0):
        self.text_dim = text_dim
        self.image_dim = image_dim
        self.seed = seed

    def encode_text(self, text) -> np.ndarray:
        return toy_encode_text(text, self.text_dim, self.seed)

    def encode_image(self, image) -> np.ndarray:
        image = np.asarray(image)
        if image.ndim == 1:
            # Already a feature vector (generator output); pass through.
            if image.shape[0] != self.image_dim:
                raise ContractError(
                    f"feature dim {image.shape[0]} != image_dim {self.image_dim}"
                )
            return image.astype(np.float64)
        return toy_encode_image(image, self.image_dim)


def encode_image_payload(image: np.ndarray) -> dict:
    """JSON-safe wire form of a pixel tensor (shape + base64 of raw bytes)."""
    img = np.ascontiguousarray(np.asarray(image, dtype=np.uint8))
    return {
        "shape": list(img.shape),
        "dtype": "uint8",
        "data_b64": base64.b64encode(img.tobytes()).decode("ascii"),
    }


def decode_image_payload(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data_b64"])
    return np.frombuffer(raw, dtype=np.uint8).reshape(payload["shape"]).copy()


class RemoteEncoderBackend:
    """HTTP adapter: POST {modality, payload} -> {vector}."""

    trainable = False

    def __init__(self, url: str, text_dim: int, image_dim: int, timeout: float = 30.0):
        self.url = url
        self.text_dim = text_dim
        self.image_dim = image_dim
        self.timeout = timeout

    def _post(self, body: dict) -> np.ndarray:
        import requests

        try:
            resp = requests.post(self.url, json=body, timeout=self.timeout)
            resp.raise_for_status()
            vector = resp.json()["vector"]
        except Exception as exc:
            raise RemoteBackendError(f"encoder endpoint {self.url} failed: {exc}") from exc
        return np.asarray(vector, dtype=np.float64)

    def encode_text(self, text) -> np.ndarray:
        v = self._post({"modality": "text", "payload": list(text)})
        if v.shape != (self.text_dim,):
            raise RemoteBackendError(f"expected text dim {self.text_dim}, got {v.shape}")
        return v

    def encode_image(self, image) -> np.ndarray:
        v = self._post({"modality": "image", "payload": encode_image_payload(image)})
        if v.shape != (self.image_dim,):
            raise RemoteBackendError(f"expected image dim {self.image_dim}, got {v.shape}")
        return v


def make_encoder_backend(tag: str, text_dim: int, image_dim: int, seed: int = 0):
    """Resolve a config tag: ``toy`` or ``remote:<url>``."""
    if tag == "toy":
        return ToyEncoderBackend(text_dim, image_dim, seed)
    if tag.startswith("remote:"):
        return RemoteEncoderBackend(tag.split(":", 1)[1], text_dim, image_dim)
    raise ContractError(f"unknown encoder backend tag: {tag!r}")


@dataclass
class EncoderParams:
    """Shared-space projections W_a^t and W_a^v (trainable, part of θ)."""

    projection_text: np.ndarray
    projection_image: np.ndarray

    @property
    def shared_dim(self) -> int:
        return self.projection_text.shape[1]

    @classmethod
    def init(cls, text_dim: int, image_dim: int, shared_dim: int, rng: np.random.Generator):
        scale_t = 1.0 / np.sqrt(text_dim)
        scale_v = 1.0 / np.sqrt(image_dim)
        return cls(
            projection_text=rng.standard_normal((text_dim, shared_dim)) * scale_t,
            projection_image=rng.standard_normal((image_dim, shared_dim)) * scale_v,
        )
