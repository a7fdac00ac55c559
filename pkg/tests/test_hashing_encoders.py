"""Deterministic hashing and the toy encoder pair."""

from __future__ import annotations

import numpy as np
import pytest

from retsimd.encoders import (
    PAD_TOKEN,
    ToyEncoderBackend,
    image_descriptor,
    make_encoder_backend,
    project_shared,
    toy_encode_image,
    toy_encode_text,
    white_image,
    white_reference_vector,
)
from retsimd.errors import ContractError
from retsimd.hashing import rng_from, stable_digest, stable_uint64, unit_vector


class TestStableDigest:
    def test_deterministic(self):
        assert stable_digest("a", 1, b"x") == stable_digest("a", 1, b"x")

    def test_framing_prevents_concat_collisions(self):
        assert stable_digest("ab") != stable_digest("a", "b")
        assert stable_digest("1") != stable_digest(1)
        assert stable_digest(b"1") != stable_digest("1")

    def test_uint64_range(self):
        v = stable_uint64("seed", 3)
        assert 0 <= v < 2**64

    def test_rejects_unhashable(self):
        with pytest.raises(TypeError):
            stable_digest(3.14)


class TestRngFrom:
    def test_reproducible_streams(self):
        a = rng_from(1, "ns").standard_normal(8)
        b = rng_from(1, "ns").standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_namespaces_independent(self):
        a = rng_from(1, "ns-a").standard_normal(8)
        b = rng_from(1, "ns-b").standard_normal(8)
        assert not np.allclose(a, b)


class TestUnitVector:
    def test_unit_norm(self):
        v = unit_vector(16, "probe", 0)
        np.testing.assert_allclose(np.linalg.norm(v), 1.0, rtol=1e-12)

    def test_cached_and_readonly(self):
        v = unit_vector(16, "probe", 0)
        assert v is unit_vector(16, "probe", 0)
        with pytest.raises(ValueError):
            v[0] = 0.0

    def test_rejects_nonpositive_dim(self):
        with pytest.raises(ValueError):
            unit_vector(0, "probe")


class TestTextEncoder:
    def test_deterministic(self):
        a = toy_encode_text(("hello", "world"), 32, seed=0)
        b = toy_encode_text(("hello", "world"), 32, seed=0)
        np.testing.assert_array_equal(a, b)

    def test_unit_norm_output(self):
        z = toy_encode_text(("x", "y", "z"), 32, seed=0)
        np.testing.assert_allclose(np.linalg.norm(z), 1.0, rtol=1e-12)

    def test_order_invariant_mean(self):
        a = toy_encode_text(("u", "v"), 16, seed=0)
        b = toy_encode_text(("v", "u"), 16, seed=0)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_pad_tokens_are_null(self):
        all_pad = toy_encode_text((PAD_TOKEN,) * 4, 16, seed=0)
        np.testing.assert_array_equal(all_pad, np.zeros(16))
        # a pad tail must not rotate the encoding direction
        clean = toy_encode_text(("a", "b"), 16, seed=0)
        padded = toy_encode_text(("a", "b", PAD_TOKEN, PAD_TOKEN), 16, seed=0)
        np.testing.assert_allclose(clean, padded, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            toy_encode_text((), 16, seed=0)


class TestImageEncoder:
    def test_descriptor_shape_and_values(self):
        img = np.zeros((32, 32, 3), dtype=np.uint8)
        img[:16, :, 0] = 255  # top half, red channel saturated
        desc = image_descriptor(img)
        assert desc.shape == (96,)
        # first grid cell, red channel: mean 1.0, variance 0.0
        np.testing.assert_allclose(desc[0], 1.0)
        np.testing.assert_allclose(desc[1], 0.0)
        # bottom rows are all zeros
        np.testing.assert_allclose(desc[-6:], 0.0)

    def test_encoding_unit_norm(self):
        rng = np.random.default_rng(42)
        img = rng.integers(0, 256, size=(64, 64, 3)).astype(np.uint8)
        z = toy_encode_image(img, 32)
        assert z.shape == (32,)
        np.testing.assert_allclose(np.linalg.norm(z), 1.0, rtol=1e-12)

    def test_white_reference_constant(self):
        a = white_reference_vector(32)
        b = toy_encode_image(white_image(), 32)
        np.testing.assert_array_equal(a, b)

    def test_rejects_bad_shape(self):
        with pytest.raises(ContractError):
            image_descriptor(np.zeros((8, 8)))
        with pytest.raises(ContractError):
            image_descriptor(np.zeros((2, 2, 3)))


class TestProjection:
    def test_linear_map(self):
        rng = np.random.default_rng(42)
        z = rng.standard_normal(8)
        w = rng.standard_normal((8, 4))
        np.testing.assert_allclose(project_shared(z, w), z @ w)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ContractError):
            project_shared(np.zeros(5), np.zeros((8, 4)))


class TestBackend:
    def test_toy_backend_roundtrip(self):
        backend = ToyEncoderBackend(text_dim=16, image_dim=16, seed=0)
        assert backend.encode_text(("a", "b")).shape == (16,)
        assert backend.encode_image(white_image(32, 32)).shape == (16,)
        assert not backend.trainable

    def test_feature_passthrough(self):
        backend = ToyEncoderBackend(text_dim=16, image_dim=16)
        vec = np.arange(16, dtype=np.float64)
        np.testing.assert_array_equal(backend.encode_image(vec), vec)
        with pytest.raises(ContractError):
            backend.encode_image(np.zeros(8))

    def test_factory(self):
        b = make_encoder_backend("toy", text_dim=8, image_dim=8)
        assert isinstance(b, ToyEncoderBackend)
        with pytest.raises(ContractError):
            make_encoder_backend("clip", text_dim=8, image_dim=8)
