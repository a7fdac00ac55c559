"""Command-line interface.

Subcommands cover the whole workflow: synthesizing benchmark data,
validating dataset files, populating the generated-feature cache,
training across seeds, evaluating modality contributions, running the
ablation suite, and re-rendering reports from stored artifacts.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on runtime
failures, which are reported as a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cache import FeatureCache
from .config import ABLATION_VARIANTS, ExperimentConfig, apply_ablation
from .data import check_disjoint, load_dataset, load_paired_dataset
from .errors import RetsimdError
from .evaluation import classification_metrics, evaluate_contributions
from .kernels import backend_name
from .model import Detector
from .reporting import (
    plot_contribution_gains,
    plot_loss_curve,
    write_contribution_tables,
    write_json,
    write_loss_history,
    write_seed_summary,
)
from .synth import SyntheticSpec, synth_dataset, synth_paired_dataset, write_dataset_jsonl, write_paired_jsonl
from .training import Checkpoint, train


def _load_split(cfg: ExperimentConfig, split: str, *, image_mode: str = "eval", seed: int = 0):
    path = cfg.dataset_path(split)
    if path is None:
        raise RetsimdError(f"configuration has no dataset path for split {split!r}")
    return load_dataset(
        str(path),
        split,
        max_text_tokens=cfg.max_text_tokens,
        image_mode=image_mode,
        seed=seed,
        name=f"{cfg.dataset_name}-{split}",
    )


def _load_paired(cfg: ExperimentConfig):
    path = cfg.dataset_path("paired")
    if path is None:
        return None
    return load_paired_dataset(str(path), max_caption_tokens=cfg.max_caption_tokens)


def _detector_from_checkpoint(ckpt: Checkpoint, cfg: ExperimentConfig) -> Detector:
    backend = cfg.generator_backend()
    if backend is not None and ckpt.generator_head is not None and getattr(backend, "trainable", False):
        backend.head = ckpt.generator_head.copy()
    return Detector(
        ckpt.detector,
        cfg.model_config(),
        cfg.segmentation_config(),
        cfg.encoder_backend(),
        backend,
    )


def _dataset_metrics(detector: Detector, dataset) -> dict:
    memo: dict = {}
    y_true = [s.label for s in dataset]
    y_pred = [int(np.argmax(detector.predict_proba(s, memo=memo))) for s in dataset]
    return classification_metrics(y_true, y_pred)


def _train_one_seed(cfg: ExperimentConfig, seed: int, seed_dir: Path, *, cache_root: str | None):
    """Train a single seed and write its artifacts; returns summary metrics."""
    seed_dir.mkdir(parents=True, exist_ok=True)
    cfg.write(seed_dir / "config.json")

    train_ds = _load_split(cfg, "train", image_mode="train", seed=seed)
    val_ds = _load_split(cfg, "validation")
    check_disjoint(train_ds, val_ds)
    paired = _load_paired(cfg)

    cache = FeatureCache(root=cache_root, dataset_name=f"{cfg.dataset_name}-seed{seed}")
    ckpt, state = train(
        train_ds,
        val_ds,
        paired,
        cfg.train_config(seed=seed),
        cfg.model_config(),
        cfg.segmentation_config(),
        encoder_backend=cfg.encoder_backend(),
        generator_backend=cfg.generator_backend(),
        cache=cache,
        run_dir=str(seed_dir),
    )
    if state.aborted:
        raise RetsimdError(f"seed {seed} aborted: {state.aborted}")

    ckpt.save(str(seed_dir / "best.ckpt"))
    write_loss_history(state.loss_history, state.generator_history, seed_dir)

    metrics = {
        "val_micro_f1": state.best_micro_f1,
        "iterations": float(state.iteration),
    }
    if cfg.dataset_path("test") is not None:
        detector = _detector_from_checkpoint(ckpt, cfg)
        test_ds = _load_split(cfg, "test")
        metrics["test_micro_f1"] = _dataset_metrics(detector, test_ds)["micro_f1"]
    write_json(metrics, seed_dir / "metrics.json")
    return metrics


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(
        n_samples=args.n,
        vocab_size=args.vocab_size,
        placement=args.placement,
        margin=args.margin,
        text_len=args.text_len,
        image_size=args.image_size,
        image_noise=args.image_noise,
    )
    counts = {}
    for split, n_scale in (("train", 1.0), ("validation", 0.25), ("test", 0.25)):
        split_spec = SyntheticSpec(
            n_samples=max(4, int(spec.n_samples * n_scale)),
            vocab_size=spec.vocab_size,
            placement=spec.placement,
            margin=spec.margin,
            text_len=spec.text_len,
            image_size=spec.image_size,
            image_noise=spec.image_noise,
        )
        ds = synth_dataset(split_spec, args.seed, split=split)
        write_dataset_jsonl(ds, str(out / f"{split}.jsonl"), str(out / f"images_{split}"))
        counts[split] = len(ds)

    pairs = synth_paired_dataset(
        args.pairs, args.seed, vocab_size=spec.vocab_size, image_size=spec.image_size
    )
    write_paired_jsonl(pairs, str(out / "paired.jsonl"), str(out / "images_paired"))
    counts["paired"] = len(pairs)

    document = {
        "dataset": {
            "train": str(out / "train.jsonl"),
            "validation": str(out / "validation.jsonl"),
            "test": str(out / "test.jsonl"),
            "paired": str(out / "paired.jsonl"),
            "name": "synthetic",
        },
        "generator": {"leak_strength": args.leak_strength},
    }
    ExperimentConfig(document).write(out / "config.json")
    print(json.dumps({"out": str(out), "counts": counts}, sort_keys=True))
    return 0


def _cmd_ingest(args) -> int:
    ds = load_dataset(args.data, args.split, max_text_tokens=args.max_text_tokens)
    stats = {
        "path": args.data,
        "split": ds.split,
        "n_samples": len(ds),
        "class_histogram": {str(k): v for k, v in sorted(ds.class_histogram().items())},
        "warnings": dict(sorted(ds.warnings.items())),
    }
    print(json.dumps(stats, sort_keys=True))
    return 0


def _cmd_generate(args) -> int:
    from .hashing import rng_from
    from .model import DetectorParams
    from .training import regenerate_all

    cfg = ExperimentConfig.from_file(args.config)
    model_config = cfg.model_config()
    if not model_config.uses_generation:
        raise RetsimdError("this configuration does not use generated image features")
    ds = _load_split(cfg, args.split)
    params = DetectorParams.init(model_config, rng_from(cfg.seeds[0], "init"))
    detector = Detector(
        params,
        model_config,
        cfg.segmentation_config(),
        cfg.encoder_backend(),
        cfg.generator_backend(),
    )
    cache = FeatureCache(root=args.cache_dir, dataset_name=f"{cfg.dataset_name}-{args.split}")
    regenerate_all([ds], detector, cache, args.round)
    print(json.dumps({"split": args.split, "n_samples": len(ds), "round": args.round}, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.json")

    seeds = tuple(args.seeds) if args.seeds else cfg.seeds
    per_seed = {}
    for seed in seeds:
        per_seed[seed] = _train_one_seed(cfg, seed, out / f"seed_{seed}", cache_root=args.cache_dir)

    paths = write_seed_summary(per_seed, out)
    summary = json.loads(Path(paths["json"]).read_text())
    print(json.dumps({"out": str(out), "seeds": list(seeds), "metrics": summary["metrics"]}, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.json")

    ckpt, _, _ = Checkpoint.load(args.checkpoint)
    detector = _detector_from_checkpoint(ckpt, cfg)
    split = args.split or cfg.evaluation_split
    ds = _load_split(cfg, split)

    report = evaluate_contributions(detector, ds, seeds=cfg.evaluation_seeds)
    write_contribution_tables(report, out)
    plot_contribution_gains(report.gains, out / "gains.png")
    print(json.dumps({"out": str(out), "split": split, "gains": report.gains}, sort_keys=True))
    return 0


def _cmd_ablate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.json")

    variants = args.variants or list(ABLATION_VARIANTS)
    seeds = tuple(args.seeds) if args.seeds else cfg.seeds
    table = {}
    for variant in variants:
        variant_cfg = ExperimentConfig(apply_ablation(cfg.document, variant))
        variant_dir = out / variant
        per_seed = {}
        for seed in seeds:
            per_seed[seed] = _train_one_seed(
                variant_cfg, seed, variant_dir / f"seed_{seed}", cache_root=args.cache_dir
            )
        paths = write_seed_summary(per_seed, variant_dir)
        table[variant] = json.loads(Path(paths["json"]).read_text())["metrics"]

    write_json(table, out / "ablation.json")
    print(json.dumps({"out": str(out), "variants": variants}, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    run = Path(args.run)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    produced = []

    contributions = run / "contributions.json"
    if contributions.exists():
        payload = json.loads(contributions.read_text())
        plot_contribution_gains(payload["gains"], out / "gains.png")
        produced.append(str(out / "gains.png"))

    loss_csv = run / "loss_history.csv"
    if loss_csv.exists():
        rows = loss_csv.read_text().splitlines()[1:]
        losses = [float(row.split(",")[1]) for row in rows if row]
        if losses:
            plot_loss_curve(losses, out / "loss.png")
            produced.append(str(out / "loss.png"))

    if not produced:
        raise RetsimdError(f"no reportable artifacts found under {run}")
    print(json.dumps({"produced": produced}, sort_keys=True))
    return 0


def _cmd_info(args) -> int:
    from . import __version__

    print(json.dumps({"version": __version__, "kernel_backend": backend_name()}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retsimd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic benchmark to a directory")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=120, help="training samples; eval splits get a quarter each")
    p.add_argument(
        "--placement", choices=["text", "image", "both", "consistency"], default="text"
    )
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--leak-strength", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--text-len", type=int, default=20)
    p.add_argument("--image-size", type=int, default=224)
    p.add_argument("--image-noise", type=float, default=0.1)
    p.add_argument("--pairs", type=int, default=16)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="validate a dataset file and print its stats")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--max-text-tokens", type=int, default=128)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("generate", help="populate the generated-feature cache for one split")
    p.add_argument("--config", required=True)
    p.add_argument("--split", choices=["train", "validation", "test"], default="train")
    p.add_argument("--cache-dir", required=True)
    p.add_argument("--round", type=int, default=1)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train across seeds and summarize")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="modality-contribution evaluation of a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "validation", "test"])
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train and compare component-removal variants")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", nargs="+", choices=list(ABLATION_VARIANTS))
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("report", help="re-render figures from stored run artifacts")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("info", help="print version and active kernel backend")
    p.set_defaults(func=_cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RetsimdError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
