"""Synthetic datasets with a decodable label signal.

Each sample gets a base text and a base image drawn from label-independent
streams; the label signal is then planted into the designated modality
with a controllable margin.  Text signal: a margin-sized fraction of
token positions is overwritten with class-specific marker tokens.  Image
signal: a class-specific quadrant is brightened proportionally to the
margin.  Whatever modality carries no signal stays label-independent by
construction, which is what the contribution-analysis tests lean on.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset, PairedImageTextDataset, Sample
from .errors import ContractError
from .hashing import rng_from

PLACEMENTS = ("text", "image", "both", "consistency")
_SIGNAL_TOKENS_PER_CLASS = 8
_COARSE = 16  # noise images are drawn at this resolution and upsampled


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 100
    vocab_size: int = 50
    placement: str = "text"
    margin: float = 0.5
    margin_image: float | None = None  # None: reuse margin
    signal_pool: int = _SIGNAL_TOKENS_PER_CLASS
    leak_strength: float = 0.0
    text_len: int = 20
    image_size: int = 224
    image_noise: float = 0.1

    def __post_init__(self):
        if self.n_samples < 4:
            raise ContractError(f"n_samples must be >= 4, got {self.n_samples}")
        if self.margin <= 0:
            raise ContractError(f"margin must be > 0, got {self.margin}")
        if self.margin_image is not None and self.margin_image <= 0:
            raise ContractError(f"margin_image must be > 0, got {self.margin_image}")
        if self.signal_pool < 1:
            raise ContractError(f"signal_pool must be >= 1, got {self.signal_pool}")
        if self.placement not in PLACEMENTS:
            raise ContractError(f"placement must be one of {PLACEMENTS}")
        if not 0.0 <= self.leak_strength <= 1.0:
            raise ContractError("leak_strength must lie in [0, 1]")
        if self.image_size % _COARSE != 0:
            raise ContractError(f"image_size must be a multiple of {_COARSE}")
        if self.text_len < 1 or self.vocab_size < 1:
            raise ContractError("text_len and vocab_size must be positive")


def signal_tokens(label: int, pool: int = _SIGNAL_TOKENS_PER_CLASS) -> tuple[str, ...]:
    """The marker-token pool for one class (disjoint from the base vocab)."""
    return tuple(f"c{label}s{j}" for j in range(pool))


def _base_text(spec: SyntheticSpec, seed: int, split: str, index: int) -> list[str]:
    rng = rng_from(seed, "synth-text", split, index)
    return [f"w{v:04d}" for v in rng.integers(0, spec.vocab_size, size=spec.text_len)]


def _base_image(spec: SyntheticSpec, seed: int, split: str, index: int) -> np.ndarray:
    rng = rng_from(seed, "synth-image", split, index)
    amp = spec.image_noise * 255.0
    coarse = 128.0 + rng.uniform(-amp, amp, size=(_COARSE, _COARSE, 3))
    scale = spec.image_size // _COARSE
    return np.kron(coarse, np.ones((scale, scale, 1)))


def _plant_text(spec: SyntheticSpec, seed: int, split: str, index: int, label: int, text: list[str]):
    rng = rng_from(seed, "synth-text-signal", split, index)
    n_sig = max(1, round(spec.margin * spec.text_len))
    n_sig = min(n_sig, spec.text_len)
    positions = rng.choice(spec.text_len, size=n_sig, replace=False)
    pool = signal_tokens(label, spec.signal_pool)
    for pos in positions:
        text[pos] = pool[int(rng.integers(0, len(pool)))]


def _plant_image(spec: SyntheticSpec, label: int, image: np.ndarray):
    half = spec.image_size // 2
    margin = spec.margin if spec.margin_image is None else spec.margin_image
    delta = margin * 100.0
    if label == 0:
        image[:half, :half] += delta
    else:
        image[half:, half:] += delta


def synth_dataset(
    spec: SyntheticSpec,
    seed: int,
    split: str = "train",
    name: str | None = None,
) -> Dataset:
    """Balanced, deterministic synthetic dataset."""
    n = spec.n_samples
    labels = np.array([0] * (n // 2) + [1] * (n - n // 2))
    order = rng_from(seed, "synth-order", split).permutation(n)
    labels = labels[order]

    samples = []
    for i in range(n):
        label = int(labels[i])
        text = _base_text(spec, seed, split, i)
        image = _base_image(spec, seed, split, i)
        if spec.placement == "consistency":
            # Label 1 marks a text-image topic mismatch; each modality alone
            # is independent of the label, only their agreement predicts it.
            topic = int(rng_from(seed, "synth-topic", split, i).integers(0, 2))
            _plant_text(spec, seed, split, i, topic, text)
            _plant_image(spec, topic ^ label, image)
        else:
            if spec.placement in ("text", "both"):
                _plant_text(spec, seed, split, i, label, text)
            if spec.placement in ("image", "both"):
                _plant_image(spec, label, image)
        image = np.clip(image, 0.0, 255.0).astype(np.uint8)
        samples.append(
            Sample(id=f"syn-{split}-{i:05d}", text=tuple(text), image=image, label=label)
        )
    return Dataset(
        samples=tuple(samples), split=split, name=name or f"synthetic-{spec.placement}"
    )


def synth_paired_dataset(
    n_pairs: int,
    seed: int,
    *,
    vocab_size: int = 50,
    caption_len: int = 8,
    image_size: int = 224,
) -> PairedImageTextDataset:
    """Caption-image pairs for exercising the reconstruction objective."""
    if n_pairs < 1:
        raise ContractError("need at least one pair")
    spec = SyntheticSpec(
        n_samples=4, vocab_size=vocab_size, text_len=caption_len, image_size=image_size
    )
    pairs = []
    for i in range(n_pairs):
        caption = tuple(_base_text(spec, seed, "paired", i))
        image = np.clip(_base_image(spec, seed, "paired", i), 0.0, 255.0).astype(np.uint8)
        pairs.append((caption, image))
    return PairedImageTextDataset(pairs=tuple(pairs), name="synthetic-paired")


def write_dataset_jsonl(dataset: Dataset, jsonl_path: str, image_dir: str) -> None:
    """Persist a synthetic dataset as ingestible JSONL plus PNG files."""
    import json

    from PIL import Image

    os.makedirs(image_dir, exist_ok=True)
    base_dir = os.path.dirname(os.path.abspath(jsonl_path))
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for sample in dataset:
            image_path = os.path.join(image_dir, f"{sample.id}.png")
            Image.fromarray(np.asarray(sample.image)).save(image_path)
            record = {
                "id": sample.id,
                "text": " ".join(sample.text),
                "image_path": os.path.relpath(image_path, base_dir),
                "label": sample.label,
            }
            fh.write(json.dumps(record) + "\n")


def write_paired_jsonl(pairs: PairedImageTextDataset, jsonl_path: str, image_dir: str) -> None:
    """Persist caption-image pairs in the format the paired loader ingests."""
    import json

    from PIL import Image

    os.makedirs(image_dir, exist_ok=True)
    base_dir = os.path.dirname(os.path.abspath(jsonl_path))
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for i, (caption, image) in enumerate(pairs):
            image_path = os.path.join(image_dir, f"pair-{i:05d}.png")
            Image.fromarray(np.asarray(image)).save(image_path)
            record = {
                "caption": " ".join(caption),
                "image_path": os.path.relpath(image_path, base_dir),
            }
            fh.write(json.dumps(record) + "\n")
