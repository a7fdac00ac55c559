"""Experiment configuration: one JSON document drives a whole run.

A configuration file is validated against a bundled JSON schema (unknown
keys are rejected at every level), merged over the built-in defaults, and
then exposed through typed accessors that build the dataclasses the rest
of the package consumes.  Serialization is canonical, so
``parse -> serialize -> parse`` is the identity on the merged document.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .encoders import make_encoder_backend
from .errors import ConfigError
from .generator import make_generator_backend
from .model import ModelConfig
from .segmentation import SegmentationConfig, SegmentStrategy
from .training import TrainConfig

DEFAULTS: dict[str, Any] = {
    "run_id": "run",
    "seeds": [1, 2, 3, 4, 5],
    "dataset": {
        "train": None,
        "validation": None,
        "test": None,
        "paired": None,
        "name": "dataset",
        "max_text_tokens": 128,
        "max_caption_tokens": 77,
    },
    "segmentation": {
        "strategy": "fixed_number",
        "k": 5,
        "l": 10,
        "min_tokens": 5,
    },
    "encoder": {
        "text_backend": "toy",
        "image_backend": "toy",
        "text_hidden_dim": 32,
        "image_hidden_dim": 32,
        "shared_dim": 16,
        "seed": 0,
    },
    "generator": {
        "backend": "mock",
        "seed": 0,
        "noise_scale": 0.0,
        "leak_strength": 0.0,
    },
    "model": {
        "classifier_hidden_dim": 16,
        "fusion": "graph",
        "use_dependency": True,
    },
    "train": {
        "alpha1": 0.01,
        "alpha2": 0.01,
        "beta": 0.01,
        "iterations": 100,
        "update_step": 0,
        "generation_step": 0,
        "batch_size_detector": 16,
        "batch_size_generator": 4,
        "lr_encoder": 3e-5,
        "lr_generator": 1e-4,
        "lr_other": 1e-3,
        "weight_decay_generator": 0.01,
        "patience": 10,
    },
    "evaluation": {
        "seeds": [0],
        "split": "test",
    },
}


def _schema() -> dict[str, Any]:
    text = resources.files("retsimd").joinpath("schemas/experiment.schema.json").read_text()
    return json.loads(text)


def _merge(defaults: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ExperimentConfig:
    """Validated, fully-defaulted view of one experiment document."""

    def __init__(self, document: dict[str, Any]):
        if not isinstance(document, dict):
            raise ConfigError("configuration document must be a JSON object")
        try:
            jsonschema.validate(document, _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(part) for part in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid configuration at {where}: {exc.message}") from exc
        self.document = _merge(DEFAULTS, document)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
        try:
            document = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration file {path} is not valid JSON: {exc}") from exc
        return cls(document)

    def to_json(self) -> str:
        return json.dumps(self.document, sort_keys=True, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    # -- typed accessors -------------------------------------------------

    @property
    def run_id(self) -> str:
        return self.document["run_id"]

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.document["seeds"])

    def dataset_path(self, split: str) -> Path | None:
        if split not in ("train", "validation", "test", "paired"):
            raise ConfigError(f"unknown dataset split {split!r}")
        value = self.document["dataset"][split]
        return None if value is None else Path(value)

    @property
    def dataset_name(self) -> str:
        return self.document["dataset"]["name"]

    @property
    def max_text_tokens(self) -> int:
        return self.document["dataset"]["max_text_tokens"]

    @property
    def max_caption_tokens(self) -> int:
        return self.document["dataset"]["max_caption_tokens"]

    def segmentation_config(self) -> SegmentationConfig:
        block = self.document["segmentation"]
        return SegmentationConfig(
            strategy=SegmentStrategy(block["strategy"]),
            k=block["k"],
            l=block["l"],
            min_tokens=block["min_tokens"],
        )

    def model_config(self) -> ModelConfig:
        enc = self.document["encoder"]
        model = self.document["model"]
        return ModelConfig(
            text_hidden_dim=enc["text_hidden_dim"],
            image_hidden_dim=enc["image_hidden_dim"],
            shared_dim=enc["shared_dim"],
            classifier_hidden_dim=model["classifier_hidden_dim"],
            fusion=model["fusion"],
            encoder_seed=enc["seed"],
            use_dependency=model["use_dependency"],
        )

    def train_config(self, seed: int | None = None) -> TrainConfig:
        block = self.document["train"]
        return TrainConfig(
            alpha1=block["alpha1"],
            alpha2=block["alpha2"],
            beta=block["beta"],
            iterations=block["iterations"],
            update_step=block["update_step"],
            generation_step=block["generation_step"],
            batch_size_detector=block["batch_size_detector"],
            batch_size_generator=block["batch_size_generator"],
            lr_encoder=block["lr_encoder"],
            lr_generator=block["lr_generator"],
            lr_other=block["lr_other"],
            weight_decay_generator=block["weight_decay_generator"],
            patience=block["patience"],
            seed=self.seeds[0] if seed is None else seed,
        )

    def encoder_backend(self):
        enc = self.document["encoder"]
        if enc["text_backend"] != enc["image_backend"]:
            raise ConfigError("text and image encoder backends must match")
        return make_encoder_backend(
            enc["text_backend"],
            text_dim=enc["text_hidden_dim"],
            image_dim=enc["image_hidden_dim"],
            seed=enc["seed"],
        )

    def generator_backend(self):
        if not self.model_config().uses_generation:
            return None
        return make_generator_backend(self.document["generator"], self.document["encoder"]["shared_dim"])

    @property
    def evaluation_seeds(self) -> tuple[int, ...]:
        return tuple(self.document["evaluation"]["seeds"])

    @property
    def evaluation_split(self) -> str:
        return self.document["evaluation"]["split"]


ABLATION_VARIANTS = ("full", "no_graph", "no_generation", "no_mutual")


def apply_ablation(document: dict[str, Any], variant: str) -> dict[str, Any]:
    """Return a copy of a config document with one component switched off.

    ``full`` is the unmodified system; ``no_graph`` replaces graph fusion
    with plain concatenation; ``no_generation`` drops the generated image
    features entirely; ``no_mutual`` zeroes both mutual-information
    regularizer weights.
    """
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}; expected one of {ABLATION_VARIANTS}")
    doc = copy.deepcopy(document)
    if variant == "no_graph":
        doc.setdefault("model", {})["fusion"] = "concat"
    elif variant == "no_generation":
        doc.setdefault("model", {})["fusion"] = "none"
    elif variant == "no_mutual":
        train = doc.setdefault("train", {})
        train["alpha1"] = 0.0
        train["alpha2"] = 0.0
    return doc
