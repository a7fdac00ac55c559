"""Pure NumPy fusion kernels (reference implementation).

These four functions are the training hot spots: forward and backward of
the two-layer graph convolution and of the stacked two-stage
cross-attention.  The compiled backend in ``_core`` mirrors the exact same
signatures and cache layouts; parity between the two is enforced by tests.

Shapes: ``a`` is the (n, n) normalized adjacency, node features are
(n, d), weight matrices (d, d), biases (d,).  All float64, C-contiguous.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def gcn2_forward(a, h, w1, b1, w2, b2):
    """Two propagation layers: ReLU after the first, identity after the second.

    Returns (out, cache) where cache carries the intermediates needed by
    ``gcn2_backward``.
    """
    ah = a @ h
    u1 = ah @ w1 + b1
    x1 = np.maximum(u1, 0.0)
    ax1 = a @ x1
    out = ax1 @ w2 + b2
    return out, (ah, u1, x1, ax1)


def gcn2_backward(d_out, a, w1, w2, cache):
    """Gradients of gcn2_forward w.r.t. (h, w1, b1, w2, b2)."""
    ah, u1, x1, ax1 = cache
    d_w2 = ax1.T @ d_out
    d_b2 = d_out.sum(axis=0)
    d_x1 = (a.T @ d_out) @ w2.T
    d_u1 = d_x1 * (u1 > 0.0)
    d_w1 = ah.T @ d_u1
    d_b1 = d_u1.sum(axis=0)
    d_h = a.T @ (d_u1 @ w1.T)
    return d_h, d_w1, d_b1, d_w2, d_b2


def _softmax(s):
    e = np.exp(s - s.max())
    return e / e.sum()

def _attn_stage(x, y, wq, wk, wv, inv_sqrt_d):
    q = x @ wq
    k = y @ wk
    s = (q @ k) * inv_sqrt_d
    w = _softmax(s)
    v = x @ wv
    o = w[:, None] * v
    return o, q, k, w, v


def attn_fuse_forward(e_v, h_v, h_t, wq, wk, wv):
    """Two cross-attention stages (against h_v, then h_t) and mean readout.

    The key/value source of each stage is a single vector, so the softmax
    runs over the query rows (graph nodes).  Returns (e, cache) with e the
    fused d-vector.
    """
    inv_sqrt_d = 1.0 / np.sqrt(e_v.shape[1])
    o1, q1, k1, w1, v1 = _attn_stage(e_v, h_v, wq, wk, wv, inv_sqrt_d)
    o2, q2, k2, w2, v2 = _attn_stage(o1, h_t, wq, wk, wv, inv_sqrt_d)
    e = o2.mean(axis=0)
    return e, (q1, k1, w1, v1, o1, q2, k2, w2, v2)


def _attn_stage_backward(d_o, x, y, wq, wk, wv, q, k, w, v, inv_sqrt_d):
    d_v = w[:, None] * d_o
    d_wv = x.T @ d_v
    d_x = d_v @ wv.T
    d_w = (d_o * v).sum(axis=1)
    d_s = w * (d_w - float(w @ d_w))
    d_q = d_s[:, None] * (k[None, :] * inv_sqrt_d)
    d_k = (d_s @ q) * inv_sqrt_d
    d_wq = x.T @ d_q
    d_x += d_q @ wq.T
    d_wk = np.outer(y, d_k)
    d_y = d_k @ wk.T
    return d_x, d_y, d_wq, d_wk, d_wv


def attn_fuse_backward(d_e, e_v, h_v, h_t, wq, wk, wv, cache):
    """Gradients of attn_fuse_forward w.r.t. (e_v, h_v, h_t, wq, wk, wv)."""
    q1, k1, w1, v1, o1, q2, k2, w2, v2 = cache
    n = e_v.shape[0]
    inv_sqrt_d = 1.0 / np.sqrt(e_v.shape[1])
    d_o2 = np.tile(d_e / n, (n, 1))
    d_o1, d_h_t, d_wq2, d_wk2, d_wv2 = _attn_stage_backward(
        d_o2, o1, h_t, wq, wk, wv, q2, k2, w2, v2, inv_sqrt_d
    )
    d_e_v, d_h_v, d_wq1, d_wk1, d_wv1 = _attn_stage_backward(
        d_o1, e_v, h_v, wq, wk, wv, q1, k1, w1, v1, inv_sqrt_d
    )
    return d_e_v, d_h_v, d_h_t, d_wq1 + d_wq2, d_wk1 + d_wk2, d_wv1 + d_wv2
