"""Graph convolution and stacked cross-attention over the fusion graph.

The two-layer GCN propagates node features through the normalized
adjacency; the fused vector then comes from two cross-attention stages
that weight graph nodes first against the original image feature h^v and
then against the text feature h^t, sharing one {W^Q, W^K, W^V} set.  The
arithmetic lives in ``retsimd.kernels`` (compiled when available); this
module owns parameters and the public forward entry points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, NumericError
from .graph import FusionGraph, normalize_adjacency


@dataclass
class GcnParams:
    """Two propagation layers: weight d×d and bias d-vector each."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, d: int, rng: np.random.Generator):
        s = 1.0 / np.sqrt(d)
        return cls(
            w1=rng.standard_normal((d, d)) * s,
            b1=np.zeros(d),
            w2=rng.standard_normal((d, d)) * s,
            b2=np.zeros(d),
        )


@dataclass
class AttentionParams:
    """Query/key/value maps shared by both attention stages; d_n = d."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    @classmethod
    def init(cls, d: int, rng: np.random.Generator):
        s = 1.0 / np.sqrt(d)
        return cls(
            wq=rng.standard_normal((d, d)) * s,
            wk=rng.standard_normal((d, d)) * s,
            wv=rng.standard_normal((d, d)) * s,
        )


def gcn_forward(graph: FusionGraph, params: GcnParams) -> np.ndarray:
    """Run both GCN layers; returns the (K+1)×d propagated node features."""
    a_hat = normalize_adjacency(graph.adjacency)
    out, _ = kernels.gcn2_forward(
        a_hat, graph.features, params.w1, params.b1, params.w2, params.b2
    )
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite GCN output")
    return out


def cross_attention_fuse(
    e_v: np.ndarray,
    h_v: np.ndarray,
    h_t: np.ndarray,
    params: AttentionParams,
) -> np.ndarray:
    """Fuse propagated node features with h^v then h^t; returns a d-vector."""
    e_v = np.asarray(e_v, dtype=np.float64)
    d = e_v.shape[1]
    if np.asarray(h_v).shape != (d,) or np.asarray(h_t).shape != (d,):
        raise ContractError("h_v and h_t must match the node feature dimension")
    e, _ = kernels.attn_fuse_forward(e_v, h_v, h_t, params.wq, params.wk, params.wv)
    if not np.all(np.isfinite(e)):
        raise NumericError("non-finite attention output")
    return e


def stage2_attention_weights(cache) -> np.ndarray:
    """Per-node attention weights of the second stage, from a kernel cache."""
    return np.asarray(cache[7])
