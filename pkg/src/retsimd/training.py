"""Alternating detector/generator training.

The loop runs I iterations over seeded epoch permutations.  Iterations
that are multiples of the update step run a generator update instead of a
detector step, so no iteration ever mutates both θ and φ; multiples of
the generation step regenerate and overwrite the cached features of the
whole dataset (a φ-read-only pass).  Validation Micro F1 (= accuracy) is
checked at epoch boundaries and drives early stopping and best-checkpoint
selection.  Every batch is a pure function of (seed, iteration), which
together with deterministic kernels makes loss histories bit-reproducible
and checkpoints resumable.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .cache import FeatureCache
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import ClassifierParams
from .data import Dataset, PairedImageTextDataset
from .errors import ContractError, NumericError
from .generator import MockGenerator, generator_step
from .hashing import rng_from, stable_digest
from .model import Detector, DetectorParams, ModelConfig, backward_sample, quantize_features
from .optim import Adam, AdamW
from .segmentation import SegmentationConfig

CLAMP = 1e-12


def l_vc(predictions, labels, *, warning_counter=None) -> float:
    """Mean cross-entropy in nats over (probability vector, label) pairs."""
    predictions = list(predictions)
    labels = list(labels)
    if not predictions or len(predictions) != len(labels):
        raise ContractError("need equal-length non-empty predictions and labels")
    total = 0.0
    for p, y in zip(predictions, labels):
        if y not in (0, 1):
            raise ContractError(f"label must be 0 or 1, got {y!r}")
        p_true = float(np.asarray(p)[y])
        if p_true <= 0.0:
            if warning_counter is not None:
                warning_counter["clamped_probability"] = (
                    warning_counter.get("clamped_probability", 0) + 1
                )
            p_true = CLAMP
        total -= math.log(p_true)
    return total / len(predictions)


def l_det(l_vc_value: float, r_ca_value: float, beta: float) -> float:
    """Detector objective: cross-entropy plus β-weighted attention term."""
    if not (math.isfinite(l_vc_value) and math.isfinite(r_ca_value) and math.isfinite(beta)):
        raise ContractError("l_det requires finite inputs")
    return l_vc_value + beta * r_ca_value


@dataclass
class TrainConfig:
    alpha1: float = 0.01
    alpha2: float = 0.01
    beta: float = 0.01
    iterations: int = 100
    update_step: int = 0  # 0 = auto: five epochs of iterations
    generation_step: int = 0  # 0 = auto: five epochs of iterations
    batch_size_detector: int = 16
    batch_size_generator: int = 4
    lr_encoder: float = 3e-5
    lr_generator: float = 1e-4
    lr_other: float = 1e-3
    weight_decay_generator: float = 0.01
    patience: int = 10
    seed: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ContractError("iterations must be >= 0")
        for name in ("batch_size_detector", "batch_size_generator", "patience"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        for name in ("update_step", "generation_step"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0 (0 selects the epoch-based default)")


@dataclass
class TrainState:
    iteration: int = 0
    best_micro_f1: float = float("-inf")
    best_val_loss: float = float("inf")
    best_iteration: int = 0
    epochs_since_improvement: int = 0
    loss_history: list[float] = field(default_factory=list)
    generator_history: list[dict] = field(default_factory=list)
    val_history: list[dict] = field(default_factory=list)
    schedule_log: list[tuple] = field(default_factory=list)
    cache_round: int = 0
    warnings: dict[str, int] = field(default_factory=dict)
    aborted: str | None = None


@dataclass
class Checkpoint:
    """Detector θ, generator φ, iteration counter, and summary metrics."""

    detector: DetectorParams
    generator_head: np.ndarray | None
    iteration: int
    metrics: dict

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"detector/{k}": v for k, v in self.detector.named().items()}
        if self.generator_head is not None:
            out["generator/head"] = self.generator_head
        return out

    def save(self, path: str, extra_arrays: dict | None = None, extra_meta: dict | None = None):
        arrays = self.arrays()
        if extra_arrays:
            arrays.update(extra_arrays)
        meta = {"iteration": self.iteration, "metrics": self.metrics}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path: str) -> tuple["Checkpoint", dict[str, np.ndarray], dict]:
        """Returns (checkpoint, all arrays, meta) so callers can pick up
        optimizer state and the training-state document."""
        arrays, meta = load_checkpoint(path)
        detector = DetectorParams.from_named(
            {k[len("detector/") :]: v for k, v in arrays.items() if k.startswith("detector/")}
        )
        head = arrays.get("generator/head")
        return (
            cls(detector=detector, generator_head=head, iteration=meta["iteration"], metrics=meta["metrics"]),
            arrays,
            meta,
        )


def params_digest(arrays: dict[str, np.ndarray]) -> str:
    parts: list = []
    for name in sorted(arrays):
        parts.append(name)
        parts.append(np.ascontiguousarray(arrays[name]).tobytes())
    return stable_digest(*parts).hex()


def detector_step(
    batch,
    cache: FeatureCache,
    detector: Detector,
    optimizer: Adam,
    config: TrainConfig,
    *,
    memo: dict,
    attention_regularizer=None,
    warning_counter: dict | None = None,
) -> dict:
    """One θ update from a batch with cached generated features.

    Gradients are averaged over the batch; parameters change only after
    every gradient is confirmed finite, so a numeric failure leaves θ
    bitwise intact.  φ is never touched.
    """
    batch = list(batch)
    if not batch:
        raise ContractError("empty detector batch")
    params = detector.params
    mcfg = detector.model_config
    named = params.named()
    grad_acc = {k: np.zeros_like(v) for k, v in named.items()}
    preds = []
    labels = []
    r_ca_total = 0.0
    scale = 1.0 / len(batch)

    for sample in batch:
        if mcfg.uses_generation:
            entry = cache.require(sample.id)
            h_g = list(entry.features)
        else:
            h_g = []
        fwd = detector.forward(sample, h_g=h_g, memo=memo)
        preds.append(fwd.p)
        labels.append(sample.label)
        one_hot = np.zeros(2)
        one_hot[sample.label] = 1.0
        d_logits = (fwd.p - one_hot) * scale
        for k, v in backward_sample(d_logits, fwd, params, mcfg).items():
            grad_acc[k] += v
        if attention_regularizer is not None:
            value, reg_grads = attention_regularizer(sample=sample, forward=fwd, params=params)
            r_ca_total += value * scale
            if reg_grads:
                for k, v in reg_grads.items():
                    grad_acc[k] += config.beta * scale * v

    loss_vc = l_vc(preds, labels, warning_counter=warning_counter)
    loss = l_det(loss_vc, r_ca_total, config.beta)
    if not math.isfinite(loss):
        raise NumericError("non-finite detector loss; θ unchanged")
    for k, g in grad_acc.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k}; θ unchanged")

    params.apply_named(optimizer.step(named, grad_acc))
    return {"l_vc": loss_vc, "r_ca": r_ca_total, "l_det": loss}


def _epoch_batch(seed: int, iteration: int, n: int, batch_size: int, steps_per_epoch: int):
    """Deterministic batch indices for 1-based iteration ``iteration``."""
    epoch = (iteration - 1) // steps_per_epoch
    pos = (iteration - 1) % steps_per_epoch
    perm = rng_from(seed, "epoch-order", epoch).permutation(n)
    return perm[pos * batch_size : (pos + 1) * batch_size]


def _paired_batch(seed: int, count: int, pairs: PairedImageTextDataset, batch_size: int):
    take = min(batch_size, len(pairs))
    idx = rng_from(seed, "paired-batch", count).choice(len(pairs), size=take, replace=False)
    return [pairs.pairs[i] for i in idx]


def label_prior(dataset: Dataset) -> np.ndarray:
    hist = dataset.class_histogram()
    total = len(dataset)
    return np.array([hist[0] / total, hist[1] / total])


def regenerate_all(datasets, detector: Detector, cache: FeatureCache, round_number: int) -> None:
    """Dataset-wide generation pass; overwrites every sample's cache entry."""
    for dataset in datasets:
        for sample in dataset:
            segments = detector.segment(sample.text)
            features = detector.generated_features(sample, segments)
            cache.put(sample.id, features, round_number, expected_k=segments.k)


def _validate(detector: Detector, dataset: Dataset, memo: dict) -> tuple[float, float]:
    """Validation micro F1 and mean cross-entropy."""
    correct = 0
    predictions = []
    for sample in dataset:
        p = detector.predict_proba(sample, memo=memo)
        predictions.append(p)
        if int(np.argmax(p)) == sample.label:
            correct += 1
    loss = l_vc(predictions, [s.label for s in dataset])
    return correct / len(dataset), loss


def train(
    train_dataset: Dataset,
    validation_dataset: Dataset,
    paired_dataset: PairedImageTextDataset | None,
    config: TrainConfig,
    model_config: ModelConfig,
    segmentation_config: SegmentationConfig,
    *,
    encoder_backend,
    generator_backend=None,
    cache: FeatureCache | None = None,
    run_dir: str | None = None,
    dep_parser="fallback",
    attention_regularizer=None,
    iteration_hook=None,
    resume: str | None = None,
) -> tuple[Checkpoint, TrainState]:
    """Run the alternating loop; returns the best checkpoint and final state.

    ``iteration_hook``, when given, is called after every iteration with a
    dict carrying the iteration number, the phase that ran, and digests of
    θ and φ (for schedule instrumentation).
    """
    if len(train_dataset) == 0 or len(validation_dataset) == 0:
        raise ContractError("train and validation datasets must be non-empty")
    needs_generator = model_config.uses_generation
    if needs_generator and generator_backend is None:
        generator_backend = MockGenerator(model_config.shared_dim, seed=config.seed)
    generator_trainable = needs_generator and getattr(generator_backend, "trainable", False)
    if generator_trainable and (paired_dataset is None or len(paired_dataset) == 0):
        raise ContractError("training a generator requires a non-empty paired dataset")

    rng = rng_from(config.seed, "init")
    params = DetectorParams.init(model_config, rng)
    if cache is None:
        cache = FeatureCache(root=None, dataset_name=train_dataset.name or "train")
    detector = Detector(
        params, model_config, segmentation_config, encoder_backend, generator_backend, dep_parser
    )

    n = len(train_dataset)
    steps_per_epoch = math.ceil(n / config.batch_size_detector)
    t_u = config.update_step if config.update_step else 5 * steps_per_epoch
    t_g = config.generation_step if config.generation_step else 5 * steps_per_epoch

    opt_other = Adam(config.lr_other)
    opt_generator = AdamW(config.lr_generator, weight_decay=config.weight_decay_generator)

    state = TrainState()
    prior = label_prior(train_dataset)
    train_memo: dict = {}
    val_memo: dict = {}

    if resume is not None:
        ckpt, arrays, meta = Checkpoint.load(resume)
        params.apply_named(
            {k[len("detector/") :]: v for k, v in arrays.items() if k.startswith("detector/")}
        )
        if generator_trainable and ckpt.generator_head is not None:
            generator_backend.head = ckpt.generator_head.copy()
        opt_other.load_state_arrays("optim/other", arrays)
        if generator_trainable and "optim/generator/t" in arrays:
            opt_generator.load_state_arrays("optim/generator", arrays)
        saved = meta.get("train_state", {})
        state.iteration = int(saved.get("iteration", ckpt.iteration))
        state.best_micro_f1 = float(saved.get("best_micro_f1", float("-inf")))
        state.best_val_loss = float(saved.get("best_val_loss", float("inf")))
        state.best_iteration = int(saved.get("best_iteration", 0))
        state.epochs_since_improvement = int(saved.get("epochs_since_improvement", 0))
        state.loss_history = list(saved.get("loss_history", []))
        state.cache_round = int(saved.get("cache_round", 0))

    def current_checkpoint(metrics: dict) -> Checkpoint:
        return Checkpoint(
            detector=params.copy(),
            generator_head=generator_backend.head.copy() if generator_trainable else None,
            iteration=state.iteration,
            metrics=metrics,
        )

    def state_meta() -> dict:
        return {
            "train_state": {
                "iteration": state.iteration,
                "best_micro_f1": state.best_micro_f1,
                "best_val_loss": state.best_val_loss,
                "best_iteration": state.best_iteration,
                "epochs_since_improvement": state.epochs_since_improvement,
                "loss_history": state.loss_history,
                "cache_round": state.cache_round,
            }
        }

    def optim_arrays() -> dict:
        out = dict(opt_other.state_arrays("optim/other"))
        if generator_trainable:
            out.update(opt_generator.state_arrays("optim/generator"))
        return out

    def write_checkpoint(ckpt: Checkpoint) -> None:
        if run_dir is not None:
            ckpt.save(
                os.path.join(run_dir, f"ckpt_{ckpt.iteration}"),
                extra_arrays=optim_arrays(),
                extra_meta=state_meta(),
            )

    def emit(event: dict) -> None:
        if run_dir is not None:
            with open(os.path.join(run_dir, "metrics.jsonl"), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)

    # Initial generation pass (round 1) over every split the loop touches.
    if needs_generator and state.cache_round == 0:
        regenerate_all([train_dataset, validation_dataset], detector, cache, 1)
        state.cache_round = 1
        state.schedule_log.append(("regenerate", 0, 1))

    best_checkpoint: Checkpoint | None = None
    # Generator phases are a pure function of the iteration number, so a
    # resumed run replays the paired-batch stream from the right point.
    generator_updates = state.iteration // t_u if (generator_trainable and t_u) else 0
    start = state.iteration + 1

    for i in range(start, config.iterations + 1):
        state.iteration = i
        phase = "generator" if (generator_trainable and t_u and i % t_u == 0) else "detector"
        try:
            if phase == "generator":
                batch_idx = _epoch_batch(config.seed, i, n, config.batch_size_detector, steps_per_epoch)
                mmd_batch = [train_dataset.samples[j] for j in batch_idx]
                generator_updates += 1
                paired = _paired_batch(
                    config.seed, generator_updates, paired_dataset, config.batch_size_generator
                )
                report = generator_step(
                    generator_backend,
                    params.classifier,
                    mmd_batch,
                    paired,
                    alpha1=config.alpha1,
                    alpha2=config.alpha2,
                    segmenter=segmentation_config.segment,
                    image_pathway=detector.image_pathway,
                    label_prior=prior,
                    optimizer=opt_generator,
                )
                state.generator_history.append(
                    {"iteration": i, "l_gen": report.l_gen, "l_t2i": report.l_t2i,
                     "r_mti": report.r_mti, "r_mil": report.r_mil}
                )
                state.loss_history.append(report.l_gen)
                state.schedule_log.append(("generator", i))
            else:
                batch_idx = _epoch_batch(config.seed, i, n, config.batch_size_detector, steps_per_epoch)
                batch = [train_dataset.samples[j] for j in batch_idx]
                report = detector_step(
                    batch, cache, detector, opt_other, config,
                    memo=train_memo,
                    attention_regularizer=attention_regularizer,
                    warning_counter=state.warnings,
                )
                state.loss_history.append(report["l_det"])
                state.schedule_log.append(("detector", i))

            if needs_generator and t_g and i % t_g == 0:
                state.cache_round += 1
                regenerate_all([train_dataset, validation_dataset], detector, cache, state.cache_round)
                state.schedule_log.append(("regenerate", i, state.cache_round))
        except NumericError as exc:
            state.aborted = str(exc)
            emit({"event": "abort", "iteration": i, "error": str(exc)})
            break

        if iteration_hook is not None:
            iteration_hook(
                {
                    "iteration": i,
                    "phase": phase,
                    "theta_digest": params_digest(params.named()),
                    "phi_digest": params_digest({"head": generator_backend.head})
                    if generator_trainable
                    else "",
                }
            )

        if i % steps_per_epoch == 0:
            epoch = i // steps_per_epoch
            f1, val_loss = _validate(detector, validation_dataset, val_memo)
            state.val_history.append(
                {"epoch": epoch, "iteration": i, "micro_f1": f1, "val_loss": val_loss}
            )
            emit(
                {
                    "event": "validation",
                    "epoch": epoch,
                    "iteration": i,
                    "micro_f1": f1,
                    "val_loss": val_loss,
                }
            )
            improved_f1 = f1 > state.best_micro_f1
            # F1 ties are broken by validation loss so the kept checkpoint
            # is the most calibrated among equally accurate ones; only a
            # strict F1 improvement resets the early-stopping counter.
            if improved_f1 or (f1 == state.best_micro_f1 and val_loss < state.best_val_loss):
                state.best_micro_f1 = f1
                state.best_val_loss = val_loss
                state.best_iteration = i
                best_checkpoint = current_checkpoint(
                    {"val_micro_f1": f1, "val_loss": val_loss, "epoch": epoch}
                )
                write_checkpoint(best_checkpoint)
            if improved_f1:
                state.epochs_since_improvement = 0
            else:
                state.epochs_since_improvement += 1
                if state.epochs_since_improvement >= config.patience:
                    emit({"event": "early_stop", "epoch": epoch, "iteration": i})
                    break

    final_metrics = {
        "val_micro_f1": state.best_micro_f1 if best_checkpoint is not None else float("nan"),
        "iterations_run": float(state.iteration),
    }
    result = best_checkpoint if best_checkpoint is not None else current_checkpoint(final_metrics)
    if run_dir is not None and (best_checkpoint is None or result.iteration != state.iteration):
        write_checkpoint(current_checkpoint(final_metrics))
    return result, state
