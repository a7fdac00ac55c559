"""Fusion entry points and the two-layer classifier."""

from __future__ import annotations

import numpy as np
import pytest

from retsimd.classifier import (
    ClassifierParams,
    classifier_backward,
    classifier_forward,
    classify,
    entropy_grad_logits,
    softmax,
)
from retsimd.errors import ContractError
from retsimd.fusion import (
    AttentionParams,
    GcnParams,
    cross_attention_fuse,
    gcn_forward,
    stage2_attention_weights,
)
from retsimd.graph import DependencyEdges, assemble_graph
from retsimd.kernels import attn_fuse_forward
from retsimd.segmentation import segment_fixed_number

from conftest import central_diff, norm_rel_err


def small_graph(rng, k: int = 3, d: int = 4):
    text = [f"w{i}" for i in range(2 * k)]
    segs = segment_fixed_number(text, k)
    dep = DependencyEdges(((0, 2 * k - 1),))
    h_v = rng.standard_normal(d)
    h_g = [rng.standard_normal(d) for _ in range(k)]
    return assemble_graph(h_v, h_g, dep, segs)


class TestGcnForward:
    def test_output_shape(self):
        rng = np.random.default_rng(42)
        graph = small_graph(rng)
        params = GcnParams.init(4, rng)
        out = gcn_forward(graph, params)
        assert out.shape == (4, 4)
        assert np.all(np.isfinite(out))

    def test_deterministic(self):
        rng = np.random.default_rng(42)
        graph = small_graph(rng)
        params = GcnParams.init(4, np.random.default_rng(1))
        np.testing.assert_array_equal(gcn_forward(graph, params), gcn_forward(graph, params))


class TestCrossAttention:
    def test_fused_vector_shape(self):
        rng = np.random.default_rng(42)
        d = 4
        e_v = rng.standard_normal((3, d))
        params = AttentionParams.init(d, rng)
        e = cross_attention_fuse(e_v, rng.standard_normal(d), rng.standard_normal(d), params)
        assert e.shape == (d,)

    def test_rejects_wrong_key_dims(self):
        rng = np.random.default_rng(42)
        params = AttentionParams.init(4, rng)
        with pytest.raises(ContractError):
            cross_attention_fuse(np.zeros((3, 4)), np.zeros(5), np.zeros(4), params)

    def test_stage2_weights_are_node_distribution(self):
        rng = np.random.default_rng(42)
        d, n = 4, 5
        e_v = rng.standard_normal((n, d))
        wq, wk, wv = (rng.standard_normal((d, d)) for _ in range(3))
        _, cache = attn_fuse_forward(e_v, rng.standard_normal(d), rng.standard_normal(d), wq, wk, wv)
        w2 = stage2_attention_weights(cache)
        assert w2.shape == (n,)
        np.testing.assert_allclose(w2.sum(), 1.0, rtol=1e-12)
        assert np.all(w2 > 0.0)


class TestSoftmax:
    def test_sums_to_one(self):
        p = softmax(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(p.sum(), 1.0, rtol=1e-12)

    def test_shift_invariant(self):
        z = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(softmax(z), softmax(z + 100.0), rtol=1e-12)

    def test_large_logits_stable(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p[0], 1.0)


class TestClassifier:
    def test_probability_output(self):
        rng = np.random.default_rng(42)
        params = ClassifierParams.init(6, 5, rng)
        p = classify(rng.standard_normal(6), params)
        assert p.shape == (2,)
        np.testing.assert_allclose(p.sum(), 1.0, rtol=1e-12)
        assert np.all(p > 0.0)

    def test_input_dim_checked(self):
        rng = np.random.default_rng(42)
        params = ClassifierParams.init(6, 5, rng)
        with pytest.raises(ContractError):
            classify(np.zeros(4), params)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(48)
        params = ClassifierParams.init(4, 3, rng)
        e = rng.standard_normal(4)
        y = 1

        def ce(w1=None, b1=None, w2=None, b2=None, ein=None):
            q = ClassifierParams(
                w1 if w1 is not None else params.w1,
                b1 if b1 is not None else params.b1,
                w2 if w2 is not None else params.w2,
                b2 if b2 is not None else params.b2,
            )
            p, _ = classifier_forward(e if ein is None else ein, q)
            return -float(np.log(p[y]))

        p, cache = classifier_forward(e, params)
        one_hot = np.array([0.0, 1.0])
        d_e, grads = classifier_backward(p - one_hot, e, params, cache)
        for name, arr in (("w1", params.w1), ("b1", params.b1), ("w2", params.w2), ("b2", params.b2)):
            fd = central_diff(lambda x, _n=name: ce(**{_n: x}), arr.copy())
            assert norm_rel_err(grads[name], fd) < 1e-6, name
        fd_e = central_diff(lambda x: ce(ein=x), e.copy())
        assert norm_rel_err(d_e, fd_e) < 1e-6

    def test_copy_is_deep(self):
        rng = np.random.default_rng(42)
        params = ClassifierParams.init(4, 3, rng)
        clone = params.copy()
        clone.w1[0, 0] += 1.0
        assert params.w1[0, 0] != clone.w1[0, 0]


class TestEntropyGradient:
    def test_matches_finite_differences_through_softmax(self):
        rng = np.random.default_rng(49)
        z = rng.standard_normal(2)

        def entropy_of(zz):
            p = softmax(zz)
            return -float(np.sum(p * np.log(p)))

        p = softmax(z)
        analytic = entropy_grad_logits(p)
        fd = central_diff(entropy_of, z.copy())
        assert norm_rel_err(analytic, fd) < 1e-6

    def test_uniform_is_stationary(self):
        g = entropy_grad_logits(np.array([0.5, 0.5]))
        np.testing.assert_allclose(g, 0.0, atol=1e-12)
