"""Modality-contribution evaluation.

A trained detector is probed with five input variants per sample: the
untouched input, text-only (image whited out), image-only (text replaced
by same-length [PAD] tokens), and the two cross-sample replacement
variants.  Predictive entropies of the detector's own output distribution
quantify, per sample, how much certainty each modality contributes; the
per-sample entropy differences average into four information gains (in
nats).  Standard classification metrics ride along from the same
prediction passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import hashing
from .data import PAD_TOKEN, Dataset, Sample
from .encoders import white_image
from .errors import ContractError, EvaluationError

ENTROPY_EPS = 1e-12


class VariantKind(Enum):
    FULL = "full"
    TEXT_ONLY = "text_only"
    IMAGE_ONLY = "image_only"
    TEXT_REPLACED = "text_replaced"
    IMAGE_REPLACED = "image_replaced"


# Which ablative variant backs each information gain: removing a modality
# (or corrupting it) and comparing entropy against the full input.
GAIN_VARIANTS = {
    "image": VariantKind.TEXT_ONLY,
    "text": VariantKind.IMAGE_ONLY,
    "replaced_image": VariantKind.IMAGE_REPLACED,
    "replaced_text": VariantKind.TEXT_REPLACED,
}

_REPLACEMENT_KINDS = (VariantKind.TEXT_REPLACED, VariantKind.IMAGE_REPLACED)


def make_variant(
    sample: Sample,
    kind: VariantKind,
    donor_pool: Dataset | None = None,
    seed: int = 0,
) -> Sample:
    """Build one ablative variant; the label is always preserved."""
    if kind is VariantKind.FULL:
        return Sample(sample.id, sample.text, sample.image, sample.label)
    if kind is VariantKind.TEXT_ONLY:
        return Sample(sample.id, sample.text, white_image(), sample.label)
    if kind is VariantKind.IMAGE_ONLY:
        pad = (PAD_TOKEN,) * len(sample.text)
        return Sample(sample.id, pad, sample.image, sample.label)

    if donor_pool is None:
        raise ContractError("replacement variants require a donor pool")
    candidates = [s for s in donor_pool if s.id != sample.id]
    if not candidates:
        raise ContractError("donor pool has no sample different from the target")
    rng = hashing.rng_from(seed, "variant", kind.value, sample.id)
    donor = candidates[int(rng.integers(0, len(candidates)))]
    if kind is VariantKind.TEXT_REPLACED:
        return Sample(sample.id, donor.text, sample.image, sample.label)
    return Sample(sample.id, sample.text, donor.image, sample.label)


def predictive_entropy(p) -> float:
    """-sum p ln p in nats, with 0 ln 0 := 0."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0):
        raise ContractError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ContractError(f"probabilities sum to {float(p.sum())}, not 1")
    total = 0.0
    for v in p:
        if v > ENTROPY_EPS:
            total -= float(v) * math.log(float(v))
    return total


def info_gain(h_ablated: float, h_full: float) -> float:
    """Entropy drop attributable to the ablated component; may be negative."""
    if not (math.isfinite(h_ablated) and math.isfinite(h_full)):
        raise ContractError("entropies must be finite")
    return h_ablated - h_full


def classification_metrics(y_true, y_pred) -> dict:
    """Accuracy, Micro F1 (= accuracy for binary single-label), Macro F1,
    and per-class precision/recall/F1 from the standard confusion counts."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred) or not y_true:
        raise ContractError("need equal-length non-empty label lists")
    accuracy = sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)
    per_class = {}
    f1s = []
    for c in (0, 1):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = {"precision": precision, "recall": recall, "f1": f1}
        f1s.append(f1)
    return {
        "accuracy": accuracy,
        "micro_f1": accuracy,
        "macro_f1": sum(f1s) / 2,
        "per_class": per_class,
    }


@dataclass
class VariantResult:
    metrics: dict
    mean_entropy: float


@dataclass
class ContributionReport:
    """Per-variant metrics plus the four information gains."""

    variants: dict[str, VariantResult]
    gains: dict[str, float]
    sample_count: int
    seeds: tuple[int, ...]
    warnings: dict[str, int] = field(default_factory=dict)

    def accuracy_gaps(self) -> dict[str, float]:
        """Full-input accuracy minus each ablative variant's accuracy."""
        full = self.variants[VariantKind.FULL.value].metrics["accuracy"]
        return {
            name: full - res.metrics["accuracy"]
            for name, res in self.variants.items()
            if name != VariantKind.FULL.value
        }

    def to_dict(self) -> dict:
        return {
            "variants": {
                name: {"metrics": res.metrics, "mean_entropy": res.mean_entropy}
                for name, res in self.variants.items()
            },
            "gains": dict(self.gains),
            "accuracy_gaps": self.accuracy_gaps(),
            "sample_count": self.sample_count,
            "seeds": list(self.seeds),
            "warnings": dict(self.warnings),
        }


def _predict(detector, sample: Sample, visual_ablated: bool = False) -> np.ndarray:
    fn = detector.predict_proba
    if visual_ablated:
        # The white-image variant must silence generated features too: a
        # backend conditioned on veracity-correlated visual detail reruns
        # unconditioned, leaving only text-derived content.  Detectors
        # without that pathway are measured as-is.
        fn = getattr(detector, "predict_proba_visual_ablated", fn)
    try:
        return np.asarray(fn(sample), dtype=np.float64)
    except Exception as exc:
        raise EvaluationError(f"prediction failed: {exc}", sample_id=sample.id) from exc


def evaluate_contributions(detector, dataset: Dataset, seeds=(0,)) -> ContributionReport:
    """Run the five-variant protocol over a dataset.

    ``detector`` must expose ``predict_proba(sample) -> probability
    vector``.  Deterministic variants run once; replacement variants run
    once per seed and average, with per-sample entropy matching throughout.
    """
    if len(dataset) == 0:
        raise ContractError("cannot evaluate an empty dataset")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ContractError("need at least one seed")

    labels = [s.label for s in dataset]
    entropies: dict[VariantKind, np.ndarray] = {}
    variants: dict[str, VariantResult] = {}

    for kind in VariantKind:
        kind_seeds = seeds if kind in _REPLACEMENT_KINDS else (seeds[0],)
        per_seed_entropy = np.zeros((len(kind_seeds), len(dataset)))
        metric_rows = []
        for si, seed in enumerate(kind_seeds):
            preds = []
            for i, sample in enumerate(dataset):
                variant = make_variant(sample, kind, donor_pool=dataset, seed=seed)
                p = _predict(detector, variant, visual_ablated=kind is VariantKind.TEXT_ONLY)
                per_seed_entropy[si, i] = predictive_entropy(p)
                preds.append(int(np.argmax(p)))
            metric_rows.append(classification_metrics(labels, preds))
        entropies[kind] = per_seed_entropy.mean(axis=0)
        merged = metric_rows[0]
        if len(metric_rows) > 1:
            merged = {
                "accuracy": float(np.mean([m["accuracy"] for m in metric_rows])),
                "micro_f1": float(np.mean([m["micro_f1"] for m in metric_rows])),
                "macro_f1": float(np.mean([m["macro_f1"] for m in metric_rows])),
                "per_class": {
                    c: {
                        k: float(np.mean([m["per_class"][c][k] for m in metric_rows]))
                        for k in ("precision", "recall", "f1")
                    }
                    for c in (0, 1)
                },
            }
        variants[kind.value] = VariantResult(
            metrics=merged, mean_entropy=float(entropies[kind].mean())
        )

    full_entropy = entropies[VariantKind.FULL]
    gains = {
        name: float(np.mean(entropies[kind] - full_entropy))
        for name, kind in GAIN_VARIANTS.items()
    }
    return ContributionReport(
        variants=variants,
        gains=gains,
        sample_count=len(dataset),
        seeds=seeds,
    )


def sim_metric(segments, generated, text_features, *, warning_counter=None) -> float:
    """Mean cosine similarity between per-segment text and generated features.

    Zero-norm pairs contribute 0 and bump ``warning_counter['zero_norm']``
    when a counter dict is supplied.
    """
    generated = list(generated)
    text_features = list(text_features)
    if len(generated) != len(text_features) or len(generated) != segments.k:
        raise ContractError("segments, generated, and text features must align")
    total = 0.0
    for g, t in zip(generated, text_features):
        g = np.asarray(g, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        ng, nt = float(np.linalg.norm(g)), float(np.linalg.norm(t))
        if ng < 1e-12 or nt < 1e-12:
            if warning_counter is not None:
                warning_counter["zero_norm"] = warning_counter.get("zero_norm", 0) + 1
            continue
        total += float(g @ t) / (ng * nt)
    return total / len(generated)
