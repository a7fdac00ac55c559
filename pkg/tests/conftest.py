"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from retsimd.encoders import ToyEncoderBackend
from retsimd.generator import MockGenerator
from retsimd.hashing import rng_from
from retsimd.model import Detector, DetectorParams, ModelConfig
from retsimd.segmentation import SegmentationConfig, SegmentStrategy
from retsimd.synth import SyntheticSpec, synth_dataset, synth_paired_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def toy_backend():
    return ToyEncoderBackend(text_dim=32, image_dim=32, seed=0)


@pytest.fixture
def tiny_dataset():
    """Eight balanced synthetic samples, text-planted signal."""
    spec = SyntheticSpec(
        n_samples=8, vocab_size=30, placement="text", margin=0.5,
        text_len=12, image_size=32, image_noise=0.1,
    )
    return synth_dataset(spec, seed=7, split="train")


@pytest.fixture
def tiny_val_dataset():
    spec = SyntheticSpec(
        n_samples=4, vocab_size=30, placement="text", margin=0.5,
        text_len=12, image_size=32, image_noise=0.1,
    )
    return synth_dataset(spec, seed=7, split="validation")


@pytest.fixture
def tiny_paired():
    return synth_paired_dataset(4, seed=7, image_size=32)


def small_detector(fusion: str = "graph", seed: int = 3, shared_dim: int = 16):
    """A freshly initialized detector over the toy encoders."""
    mc = ModelConfig(
        text_hidden_dim=32, image_hidden_dim=32, shared_dim=shared_dim, fusion=fusion
    )
    params = DetectorParams.init(mc, rng_from(seed, "init"))
    gen = MockGenerator(shared_dim, seed=seed) if mc.uses_generation else None
    seg = SegmentationConfig(strategy=SegmentStrategy.FIXED_NUMBER, k=3)
    return Detector(params, mc, seg, ToyEncoderBackend(32, 32), gen)


def norm_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Relative error between two gradient tensors, norm-wise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom


def central_diff(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar f at array x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        hi = f(x)
        xf[i] = orig - eps
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * eps)
    return out
