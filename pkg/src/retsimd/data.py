"""Domain types and dataset ingestion.

Datasets are JSON-lines files, one record per line with keys ``id``,
``text``, ``image_path`` (nullable), ``label``.  Text is tokenized by
whitespace at load (a record may also carry a pre-tokenized list) and
truncated to a configurable budget.  Images are resized to 256x256 then
cropped to 224x224: a seeded random crop in training mode, a center crop
in eval mode.  Absent or unreadable images become the all-white
placeholder and are tallied in the dataset's warning counters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .encoders import PAD_TOKEN, white_image
from .errors import ContractError, IngestionError, ValidationError

RESIZE_TO = 256
CROP_TO = 224
MAX_TEXT_TOKENS = 128
MAX_CAPTION_TOKENS = 77


def tokenize(text) -> tuple[str, ...]:
    """Whitespace tokenization; pre-tokenized sequences pass through."""
    if isinstance(text, str):
        return tuple(text.split())
    return tuple(str(t) for t in text)


@dataclass(frozen=True)
class Sample:
    """One post: token sequence, pixel tensor, binary veracity label."""

    id: str
    text: tuple[str, ...]
    image: np.ndarray
    label: int

    def __post_init__(self):
        if len(self.text) == 0:
            raise ContractError(f"sample {self.id!r} has empty text")
        if self.label not in (0, 1):
            raise ContractError(f"sample {self.id!r} label must be 0 or 1, got {self.label}")
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ContractError(f"sample {self.id!r} image must be HxWx3, got {img.shape}")
        img.setflags(write=False)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    split: str
    name: str = ""
    warnings: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def class_histogram(self) -> dict[int, int]:
        hist = {0: 0, 1: 0}
        for s in self.samples:
            hist[s.label] += 1
        return hist

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)


@dataclass(frozen=True)
class PairedImageTextDataset:
    """Gold caption-image pairs for the generator's reconstruction loss."""

    pairs: tuple[tuple[tuple[str, ...], np.ndarray], ...]
    name: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def _center_crop(img: np.ndarray, size: int) -> np.ndarray:
    top = (img.shape[0] - size) // 2
    left = (img.shape[1] - size) // 2
    return img[top : top + size, left : left + size]


def load_image(
    path: str,
    *,
    mode: str = "eval",
    crop_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Resize to 256x256 then crop 224x224 (random in train, center in eval)."""
    from PIL import Image

    with Image.open(path) as im:
        img = np.asarray(im.convert("RGB").resize((RESIZE_TO, RESIZE_TO)))
    if mode == "train":
        if crop_rng is None:
            raise ContractError("training-mode crop requires a generator")
        span = RESIZE_TO - CROP_TO
        top = int(crop_rng.integers(0, span + 1))
        left = int(crop_rng.integers(0, span + 1))
        return np.ascontiguousarray(img[top : top + CROP_TO, left : left + CROP_TO])
    return np.ascontiguousarray(_center_crop(img, CROP_TO))


def _resolve_path(base_dir: str, image_path: str) -> str:
    if os.path.isabs(image_path):
        return image_path
    return os.path.join(base_dir, image_path)


def load_dataset(
    path: str,
    split: str,
    *,
    max_text_tokens: int = MAX_TEXT_TOKENS,
    image_mode: str = "eval",
    seed: int = 0,
    name: str | None = None,
) -> Dataset:
    """Ingest a JSONL dataset; deterministic for identical file bytes."""
    from . import hashing

    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    base_dir = os.path.dirname(os.path.abspath(path))
    samples: list[Sample] = []
    seen_ids: set[str] = set()
    warnings = {"missing_image": 0, "unreadable_image": 0}

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"malformed JSON: {exc}", line=lineno, path=path) from exc
            if not isinstance(record, dict):
                raise IngestionError("record is not an object", line=lineno, path=path)
            for key in ("id", "text", "image_path", "label"):
                if key not in record:
                    raise IngestionError(f"missing key {key!r}", line=lineno, path=path)

            sample_id = str(record["id"])
            if sample_id in seen_ids:
                raise ValidationError(f"duplicate id {sample_id!r}", line=lineno, path=path)
            seen_ids.add(sample_id)

            label = record["label"]
            if isinstance(label, bool) or label not in (0, 1):
                raise ValidationError(f"label must be 0 or 1, got {label!r}", line=lineno, path=path)

            text = tokenize(record["text"])[:max_text_tokens]
            if not text:
                raise ValidationError("empty text after tokenization", line=lineno, path=path)

            image_path = record["image_path"]
            if image_path is None:
                warnings["missing_image"] += 1
                image = white_image()
            else:
                resolved = _resolve_path(base_dir, str(image_path))
                try:
                    crop_rng = hashing.rng_from(seed, "crop", sample_id)
                    image = load_image(resolved, mode=image_mode, crop_rng=crop_rng)
                except (OSError, ValueError):
                    warnings["unreadable_image"] += 1
                    image = white_image()

            samples.append(Sample(id=sample_id, text=text, image=image, label=int(label)))

    return Dataset(samples=tuple(samples), split=split, name=name, warnings=warnings)


def load_paired_dataset(
    path: str,
    *,
    max_caption_tokens: int = MAX_CAPTION_TOKENS,
    name: str | None = None,
) -> PairedImageTextDataset:
    """Ingest JSONL caption/image pairs (keys: caption, image_path)."""
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    base_dir = os.path.dirname(os.path.abspath(path))
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"malformed JSON: {exc}", line=lineno, path=path) from exc
            for key in ("caption", "image_path"):
                if key not in record:
                    raise IngestionError(f"missing key {key!r}", line=lineno, path=path)
            caption = tokenize(record["caption"])[:max_caption_tokens]
            if not caption:
                raise ValidationError("empty caption", line=lineno, path=path)
            if record["image_path"] is None:
                raise ValidationError("paired record requires an image", line=lineno, path=path)
            try:
                image = load_image(_resolve_path(base_dir, str(record["image_path"])), mode="eval")
            except (OSError, ValueError) as exc:
                raise IngestionError(f"unreadable paired image: {exc}", line=lineno, path=path) from exc
            pairs.append((caption, image))
    return PairedImageTextDataset(pairs=tuple(pairs), name=name)


def check_disjoint(*datasets: Dataset) -> None:
    """Splits must not share sample ids."""
    seen: dict[str, str] = {}
    for ds in datasets:
        for s in ds.samples:
            if s.id in seen and seen[s.id] != ds.split:
                raise ValidationError(f"id {s.id!r} appears in splits {seen[s.id]!r} and {ds.split!r}")
            seen[s.id] = ds.split
