"""Experiment configuration documents and the command-line interface."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from retsimd.config import (
    ABLATION_VARIANTS,
    DEFAULTS,
    ExperimentConfig,
    apply_ablation,
)
from retsimd.cli import main
from retsimd.errors import ConfigError


@pytest.fixture(autouse=True)
def _isolated_cache_env(monkeypatch):
    monkeypatch.delenv("RETSIMD_CACHE_DIR", raising=False)


class TestExperimentConfig:
    def test_empty_document_gets_all_defaults(self):
        cfg = ExperimentConfig({})
        assert cfg.document == DEFAULTS
        assert cfg.run_id == "run"
        assert cfg.seeds == (1, 2, 3, 4, 5)
        assert cfg.evaluation_seeds == (0,)
        assert cfg.evaluation_split == "test"

    def test_nested_merge_keeps_siblings(self):
        cfg = ExperimentConfig({"train": {"iterations": 7}})
        assert cfg.document["train"]["iterations"] == 7
        assert cfg.document["train"]["patience"] == DEFAULTS["train"]["patience"]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig({"trian": {}})

    def test_wrong_type_reports_path(self):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig({"train": {"iterations": "many"}})
        assert "train/iterations" in str(err.value)

    def test_non_object_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(["not", "an", "object"])

    def test_typed_accessors(self):
        cfg = ExperimentConfig(
            {
                "segmentation": {"strategy": "fixed_length", "l": 4},
                "encoder": {"shared_dim": 8},
                "model": {"fusion": "concat"},
            }
        )
        seg = cfg.segmentation_config()
        assert seg.strategy.value == "fixed_length" and seg.l == 4
        model = cfg.model_config()
        assert model.fusion == "concat" and model.shared_dim == 8
        tc = cfg.train_config(seed=9)
        assert tc.seed == 9
        assert cfg.train_config().seed == cfg.seeds[0]
        backend = cfg.encoder_backend()
        assert backend.text_dim == 32

    def test_to_json_is_canonical_fixed_point(self):
        cfg = ExperimentConfig({"run_id": "abc", "train": {"beta": 0.5}})
        text = cfg.to_json()
        again = ExperimentConfig(json.loads(text)).to_json()
        assert again == text

    def test_file_roundtrip_and_errors(self, tmp_path):
        path = tmp_path / "cfg.json"
        ExperimentConfig({"run_id": "abc"}).write(path)
        cfg = ExperimentConfig.from_file(path)
        assert cfg.run_id == "abc"
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(bad)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "missing.json")


class TestApplyAblation:
    def test_variants(self):
        doc = {"model": {"fusion": "graph"}, "train": {"alpha1": 0.5}}
        assert apply_ablation(doc, "full") == doc
        assert apply_ablation(doc, "no_graph")["model"]["fusion"] == "concat"
        assert apply_ablation(doc, "no_generation")["model"]["fusion"] == "none"
        no_mi = apply_ablation(doc, "no_mutual")
        assert no_mi["train"]["alpha1"] == 0.0 and no_mi["train"]["alpha2"] == 0.0
        # the input document is never mutated
        assert doc["model"]["fusion"] == "graph" and doc["train"]["alpha1"] == 0.5

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            apply_ablation({}, "no_everything")

    def test_every_variant_yields_valid_config(self):
        for variant in ABLATION_VARIANTS:
            ExperimentConfig(apply_ablation({}, variant))


class TestCliBasics:
    def test_info(self, capsys):
        assert main(["info"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["kernel_backend"] in ("compiled", "pure")
        assert payload["version"]

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_error_path_returns_1_with_json_stderr(self, capsys, tmp_path):
        code = main(["ingest", "--data", str(tmp_path / "missing.jsonl")])
        assert code == 1
        err = capsys.readouterr().err.strip()
        payload = json.loads(err)
        assert "error" in payload and "message" in payload


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    code = main(
        [
            "synth", "--out", str(out), "--n", "8", "--image-size", "32",
            "--text-len", "6", "--vocab-size", "20", "--pairs", "2",
            "--seed", "3",
        ]
    )
    assert code == 0
    # shrink the experiment so the pipeline smoke tests stay fast
    doc = json.loads((out / "config.json").read_text())
    doc["seeds"] = [1]
    doc["segmentation"] = {"strategy": "fixed_number", "k": 3}
    doc["encoder"] = {"text_hidden_dim": 16, "image_hidden_dim": 16, "shared_dim": 8}
    doc["generator"] = {"backend": "mock", "noise_scale": 0.1}
    doc["train"] = {
        "iterations": 6,
        "batch_size_detector": 4,
        "batch_size_generator": 2,
        "update_step": 3,
        "generation_step": 2,
        "patience": 100,
    }
    ExperimentConfig(doc).write(out / "config.json")
    return out


class TestCliPipeline:
    def test_synth_wrote_benchmark(self, synth_dir):
        for name in ("train.jsonl", "validation.jsonl", "test.jsonl", "paired.jsonl", "config.json"):
            assert (synth_dir / name).exists()
        lines = (synth_dir / "train.jsonl").read_text().splitlines()
        assert len(lines) == 8

    def test_ingest(self, synth_dir, capsys):
        assert main(["ingest", "--data", str(synth_dir / "train.jsonl")]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["n_samples"] == 8
        assert stats["class_histogram"] == {"0": 4, "1": 4}

    def test_generate_populates_cache(self, synth_dir, tmp_path, capsys):
        cache_dir = tmp_path / "cache"
        code = main(
            [
                "generate", "--config", str(synth_dir / "config.json"),
                "--split", "train", "--cache-dir", str(cache_dir),
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_samples"] == 8
        stored = list(cache_dir.rglob("round_1.bin"))
        assert len(stored) == 8

    def test_train_evaluate_report(self, synth_dir, tmp_path, capsys):
        run = tmp_path / "run"
        code = main(
            [
                "train", "--config", str(synth_dir / "config.json"),
                "--out", str(run), "--seeds", "1",
                "--cache-dir", str(tmp_path / "cache"),
            ]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["seeds"] == [1]
        assert "val_micro_f1" in out["metrics"]
        seed_dir = run / "seed_1"
        for name in ("best.ckpt", "metrics.json", "loss_history.csv", "config.json"):
            assert (seed_dir / name).exists()
        assert (run / "summary.json").exists() and (run / "summary.csv").exists()
        metrics = json.loads((seed_dir / "metrics.json").read_text())
        assert "test_micro_f1" in metrics

        eval_dir = tmp_path / "eval"
        code = main(
            [
                "evaluate", "--config", str(synth_dir / "config.json"),
                "--checkpoint", str(seed_dir / "best.ckpt"),
                "--out", str(eval_dir),
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload["gains"]) == {"image", "text", "replaced_image", "replaced_text"}
        for name in ("contributions.json", "contributions_variants.csv", "contributions_gains.csv", "gains.png"):
            assert (eval_dir / name).exists()

        code = main(["report", "--run", str(eval_dir), "--out", str(tmp_path / "figs")])
        assert code == 0
        assert (tmp_path / "figs" / "gains.png").exists()
        code = main(["report", "--run", str(seed_dir), "--out", str(tmp_path / "figs2")])
        assert code == 0
        assert (tmp_path / "figs2" / "loss.png").exists()

    def test_report_with_nothing_to_do_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", "--run", str(empty)]) == 1
        assert "error" in capsys.readouterr().err

    def test_ablate_two_variants(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "ablation"
        code = main(
            [
                "ablate", "--config", str(synth_dir / "config.json"),
                "--out", str(out), "--variants", "full", "no_generation",
                "--seeds", "1", "--cache-dir", str(tmp_path / "cache"),
            ]
        )
        assert code == 0
        table = json.loads((out / "ablation.json").read_text())
        assert set(table) == {"full", "no_generation"}
        for variant in ("full", "no_generation"):
            assert (out / variant / "seed_1" / "best.ckpt").exists()
