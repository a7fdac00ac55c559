"""Fusion kernels: pure/compiled parity and gradient correctness."""

from __future__ import annotations

import numpy as np
import pytest

from retsimd import kernels
from retsimd.kernels import backend_name, get_backend

from conftest import central_diff, norm_rel_err

try:
    get_backend("compiled")
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False


def random_instance(rng, n: int, d: int):
    a = rng.random((n, n))
    a = (a + a.T) / 2.0
    h = rng.standard_normal((n, d))
    w1, w2 = rng.standard_normal((d, d)), rng.standard_normal((d, d))
    b1, b2 = rng.standard_normal(d), rng.standard_normal(d)
    return a, h, w1, b1, w2, b2


class TestBackendSelection:
    def test_active_backend_named(self):
        assert backend_name() in ("pure", "compiled")

    def test_get_backend_exposes_same_api(self):
        pure = get_backend("pure")
        for fn in ("gcn2_forward", "gcn2_backward", "attn_fuse_forward", "attn_fuse_backward"):
            assert callable(getattr(pure, fn))

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            get_backend("gpu")


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled extension not built")
class TestParity:
    """The compiled extension must agree with the pure reference bitwise-close."""

    def test_gcn_forward_backward_parity(self):
        rng = np.random.default_rng(42)
        pure, comp = get_backend("pure"), get_backend("compiled")
        for _ in range(25):
            n, d = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            a, h, w1, b1, w2, b2 = random_instance(rng, n, d)
            out_p, cache_p = pure.gcn2_forward(a, h, w1, b1, w2, b2)
            out_c, cache_c = comp.gcn2_forward(a, h, w1, b1, w2, b2)
            np.testing.assert_allclose(out_c, out_p, rtol=1e-13, atol=1e-13)
            d_out = rng.standard_normal(out_p.shape)
            grads_p = pure.gcn2_backward(d_out, a, w1, w2, cache_p)
            grads_c = comp.gcn2_backward(d_out, a, w1, w2, cache_c)
            for gp, gc in zip(grads_p, grads_c):
                np.testing.assert_allclose(gc, gp, rtol=1e-12, atol=1e-12)

    def test_attn_forward_backward_parity(self):
        rng = np.random.default_rng(43)
        pure, comp = get_backend("pure"), get_backend("compiled")
        for _ in range(25):
            n, d = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            e_v = rng.standard_normal((n, d))
            h_v, h_t = rng.standard_normal(d), rng.standard_normal(d)
            wq, wk, wv = (rng.standard_normal((d, d)) for _ in range(3))
            e_p, cache_p = pure.attn_fuse_forward(e_v, h_v, h_t, wq, wk, wv)
            e_c, cache_c = comp.attn_fuse_forward(e_v, h_v, h_t, wq, wk, wv)
            np.testing.assert_allclose(e_c, e_p, rtol=1e-13, atol=1e-13)
            d_e = rng.standard_normal(d)
            grads_p = pure.attn_fuse_backward(d_e, e_v, h_v, h_t, wq, wk, wv, cache_p)
            grads_c = comp.attn_fuse_backward(d_e, e_v, h_v, h_t, wq, wk, wv, cache_c)
            for gp, gc in zip(grads_p, grads_c):
                np.testing.assert_allclose(gc, gp, rtol=1e-12, atol=1e-12)


class TestGcnGradients:
    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(44)
        n, d = 4, 3
        a, h, w1, b1, w2, b2 = random_instance(rng, n, d)
        r = rng.standard_normal((n, d))  # fixed projection to a scalar

        def loss(**kw):
            args = dict(a=a, h=h, w1=w1, b1=b1, w2=w2, b2=b2)
            args.update(kw)
            out, _ = kernels.gcn2_forward(
                args["a"], args["h"], args["w1"], args["b1"], args["w2"], args["b2"]
            )
            return float((out * r).sum())

        out, cache = kernels.gcn2_forward(a, h, w1, b1, w2, b2)
        d_h, d_w1, d_b1, d_w2, d_b2 = kernels.gcn2_backward(r, a, w1, w2, cache)
        for name, analytic, arr in (
            ("h", d_h, h), ("w1", d_w1, w1), ("b1", d_b1, b1),
            ("w2", d_w2, w2), ("b2", d_b2, b2),
        ):
            fd = central_diff(lambda x, _n=name: loss(**{_n: x}), arr.copy())
            assert norm_rel_err(analytic, fd) < 1e-6, name

    def test_relu_gate(self):
        # with strictly negative first-layer preactivations the output is the bias
        a = np.eye(2)
        h = np.ones((2, 2))
        w1 = -np.eye(2) * 10.0
        b2 = np.array([0.5, -0.5])
        out, _ = kernels.gcn2_forward(a, h, w1, np.zeros(2), np.eye(2), b2)
        np.testing.assert_allclose(out, np.tile(b2, (2, 1)))


class TestAttentionGradients:
    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(45)
        n, d = 4, 3
        e_v = rng.standard_normal((n, d))
        h_v, h_t = rng.standard_normal(d), rng.standard_normal(d)
        wq, wk, wv = (rng.standard_normal((d, d)) for _ in range(3))
        r = rng.standard_normal(d)

        def loss(**kw):
            args = dict(e_v=e_v, h_v=h_v, h_t=h_t, wq=wq, wk=wk, wv=wv)
            args.update(kw)
            e, _ = kernels.attn_fuse_forward(
                args["e_v"], args["h_v"], args["h_t"], args["wq"], args["wk"], args["wv"]
            )
            return float(e @ r)

        e, cache = kernels.attn_fuse_forward(e_v, h_v, h_t, wq, wk, wv)
        grads = kernels.attn_fuse_backward(r, e_v, h_v, h_t, wq, wk, wv, cache)
        names = ("e_v", "h_v", "h_t", "wq", "wk", "wv")
        arrays = (e_v, h_v, h_t, wq, wk, wv)
        for name, analytic, arr in zip(names, grads, arrays):
            fd = central_diff(lambda x, _n=name: loss(**{_n: x}), arr.copy())
            assert norm_rel_err(analytic, fd) < 1e-6, name

    def test_softmax_weights_sum_to_one(self):
        rng = np.random.default_rng(46)
        n, d = 5, 4
        e_v = rng.standard_normal((n, d))
        h_v, h_t = rng.standard_normal(d), rng.standard_normal(d)
        wq, wk, wv = (rng.standard_normal((d, d)) for _ in range(3))
        _, cache = kernels.attn_fuse_forward(e_v, h_v, h_t, wq, wk, wv)
        w1, w2 = cache[2], cache[7]
        np.testing.assert_allclose(w1.sum(), 1.0, rtol=1e-12)
        np.testing.assert_allclose(w2.sum(), 1.0, rtol=1e-12)
        assert w1.shape == (n,) and w2.shape == (n,)

    def test_single_node_attention_is_identity_mixture(self):
        # with one node the softmax over nodes is degenerate: e == o2 row
        rng = np.random.default_rng(47)
        d = 3
        e_v = rng.standard_normal((1, d))
        h_v, h_t = rng.standard_normal(d), rng.standard_normal(d)
        wq, wk, wv = (rng.standard_normal((d, d)) for _ in range(3))
        e, _ = kernels.attn_fuse_forward(e_v, h_v, h_t, wq, wk, wv)
        np.testing.assert_allclose(e, (e_v @ wv @ wv).ravel(), rtol=1e-12)
