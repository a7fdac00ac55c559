"""Two-layer veracity classifier: linear, ReLU, linear, softmax.

Used both as the detector's head and, via a periodically synced copy, as
the auxiliary head that scores generated features during generator
updates.  Ties in argmax break toward class 0 (real).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def entropy_grad_logits(p: np.ndarray) -> np.ndarray:
    """d H(softmax(z)) / dz for the entropy of the softmax output.

    Uses H = -sum p ln p; valid away from exact zeros (softmax outputs
    are strictly positive).
    """
    logp = np.log(p)
    h = -float(p @ logp)
    return -p * (logp + h)


@dataclass
class ClassifierParams:
    """d_in -> d_h -> 2 with one ReLU between the linear layers."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, in_dim: int, hidden_dim: int, rng: np.random.Generator):
        return cls(
            w1=rng.standard_normal((in_dim, hidden_dim)) / np.sqrt(in_dim),
            b1=np.zeros(hidden_dim),
            w2=rng.standard_normal((hidden_dim, 2)) / np.sqrt(hidden_dim),
            b2=np.zeros(2),
        )

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def classifier_forward(e: np.ndarray, params: ClassifierParams):
    """Returns (probabilities, cache) for one input vector."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (params.in_dim,):
        raise ContractError(f"input dim {e.shape} != classifier dim {params.in_dim}")
    u1 = e @ params.w1 + params.b1
    x1 = np.maximum(u1, 0.0)
    logits = x1 @ params.w2 + params.b2
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite classifier logits")
    return softmax(logits), (u1, x1)


def classify(e: np.ndarray, params: ClassifierParams) -> np.ndarray:
    """Probability vector over {real, fake}; sums to 1."""
    p, _ = classifier_forward(e, params)
    return p


def classifier_backward(d_logits: np.ndarray, e: np.ndarray, params: ClassifierParams, cache):
    """Backprop an upstream logit gradient; returns (d_e, grads).

    ``grads`` maps the four parameter names to arrays of matching shape.
    """
    u1, x1 = cache
    d_w2 = np.outer(x1, d_logits)
    d_b2 = d_logits.copy()
    d_x1 = params.w2 @ d_logits
    d_u1 = d_x1 * (u1 > 0.0)
    d_w1 = np.outer(e, d_u1)
    d_b1 = d_u1.copy()
    d_e = params.w1 @ d_u1
    return d_e, {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}
