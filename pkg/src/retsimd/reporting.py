"""Report emission: tables and figures summarizing runs.

Everything here writes plain files (CSV, JSON, PNG) under a caller-chosen
directory and is rerun-stable: writing the same inputs twice produces the
same bytes (figures excepted only by matplotlib's own metadata handling,
which is pinned below).
"""

from __future__ import annotations

import csv
import json
import statistics
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ContributionReport

# deterministic PNG output across reruns
matplotlib.rcParams["svg.hashsalt"] = "retsimd"


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(payload: Mapping[str, Any], path: str | Path) -> Path:
    path = Path(path)
    _ensure_dir(path.parent)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def write_contribution_tables(report: ContributionReport, out_dir: str | Path, prefix: str = "contributions") -> dict[str, Path]:
    """Emit a contribution report as one JSON document and two CSV tables."""
    out_dir = _ensure_dir(Path(out_dir))
    paths: dict[str, Path] = {}

    paths["json"] = write_json(report.to_dict(), out_dir / f"{prefix}.json")

    variants_path = out_dir / f"{prefix}_variants.csv"
    with variants_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["variant", "accuracy", "micro_f1", "macro_f1", "mean_entropy"])
        for name in sorted(report.variants):
            result = report.variants[name]
            writer.writerow([
                name,
                f"{result.metrics['accuracy']:.6f}",
                f"{result.metrics['micro_f1']:.6f}",
                f"{result.metrics['macro_f1']:.6f}",
                f"{result.mean_entropy:.6f}",
            ])
    paths["variants"] = variants_path

    gains_path = out_dir / f"{prefix}_gains.csv"
    gaps = report.accuracy_gaps()
    with gains_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["modality", "information_gain", "accuracy_gap"])
        for modality in sorted(report.gains):
            writer.writerow([
                modality,
                f"{report.gains[modality]:.6f}",
                f"{gaps.get(modality, float('nan')):.6f}",
            ])
    paths["gains"] = gains_path
    return paths


def write_loss_history(
    loss_history: Sequence[float],
    generator_history: Sequence[Mapping[str, float]],
    out_dir: str | Path,
) -> dict[str, Path]:
    """Persist the per-iteration loss trace and the generator-phase terms."""
    out_dir = _ensure_dir(Path(out_dir))
    paths: dict[str, Path] = {}

    loss_path = out_dir / "loss_history.csv"
    with loss_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "loss"])
        for step, value in enumerate(loss_history, start=1):
            writer.writerow([step, f"{float(value):.12g}"])
    paths["loss"] = loss_path

    generator_path = out_dir / "loss_generator.csv"
    with generator_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "l_t2i", "r_mti", "r_mil", "l_gen"])
        for entry in generator_history:
            writer.writerow([
                entry["iteration"],
                f"{entry['l_t2i']:.12g}",
                f"{entry['r_mti']:.12g}",
                f"{entry['r_mil']:.12g}",
                f"{entry['l_gen']:.12g}",
            ])
    paths["generator"] = generator_path
    return paths


def aggregate_metric(values: Iterable[float]) -> dict[str, float]:
    """Mean and sample standard deviation of a metric across seeds."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("cannot aggregate an empty metric list")
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"mean": mean, "std": std, "n": len(values)}


def write_seed_summary(
    per_seed: Mapping[int, Mapping[str, float]],
    out_dir: str | Path,
    prefix: str = "summary",
) -> dict[str, Path]:
    """Collapse per-seed metric dicts into mean/std rows plus raw values."""
    out_dir = _ensure_dir(Path(out_dir))
    seeds = sorted(per_seed)
    if not seeds:
        raise ValueError("per_seed must contain at least one seed")
    metric_names = sorted(per_seed[seeds[0]])

    summary = {
        name: aggregate_metric([per_seed[s][name] for s in seeds])
        for name in metric_names
    }
    payload = {
        "seeds": seeds,
        "metrics": summary,
        "per_seed": {str(s): {k: float(v) for k, v in per_seed[s].items()} for s in seeds},
    }
    paths = {"json": write_json(payload, out_dir / f"{prefix}.json")}

    csv_path = out_dir / f"{prefix}.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "mean", "std", "n"] + [f"seed_{s}" for s in seeds])
        for name in metric_names:
            row = summary[name]
            writer.writerow(
                [name, f"{row['mean']:.6f}", f"{row['std']:.6f}", row["n"]]
                + [f"{per_seed[s][name]:.6f}" for s in seeds]
            )
    paths["csv"] = csv_path
    return paths


def plot_contribution_gains(gains: Mapping[str, float], path: str | Path) -> Path:
    """Bar chart of the four per-modality information gains."""
    path = Path(path)
    _ensure_dir(path.parent)
    modalities = sorted(gains)
    values = [gains[m] for m in modalities]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(modalities, values, color="#4878a8")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("information gain (nats)")
    ax.set_title("modality contributions")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "retsimd"})
    plt.close(fig)
    return path


def plot_loss_curve(loss_history: Sequence[float], path: str | Path) -> Path:
    """Training loss against iteration number."""
    path = Path(path)
    _ensure_dir(path.parent)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(loss_history) + 1), [float(v) for v in loss_history], linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss (nats)")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "retsimd"})
    plt.close(fig)
    return path


def plot_segmentation_sensitivity(
    curves: Mapping[str, Sequence[tuple[float, float]]],
    path: str | Path,
    metric_name: str = "micro F1",
) -> Path:
    """Line plot of metric versus segmentation parameter, one line per strategy."""
    path = Path(path)
    _ensure_dir(path.parent)

    fig, ax = plt.subplots(figsize=(6, 4))
    for strategy in sorted(curves):
        points = sorted(curves[strategy])
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, marker="o", label=strategy)
    ax.set_xlabel("segmentation parameter")
    ax.set_ylabel(metric_name)
    ax.set_title("segmentation sensitivity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "retsimd"})
    plt.close(fig)
    return path
