"""Adaptive-moment optimizers over named parameter dicts.

Functional style: ``step`` takes and returns ``{name: array}`` so callers
decide where parameters live.  ``AdamW`` applies decoupled weight decay.
Moment state is serializable to named arrays for checkpoint resume.
"""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    weight_decay = 0.0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict:
        self.t += 1
        out = {}
        for name in sorted(params):
            p = params[name]
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            new_p = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                new_p = new_p - self.lr * self.weight_decay * p
            out[name] = new_p
        return out

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/t": np.array([self.t], dtype=np.int64)}
        for name, arr in self.m.items():
            out[f"{prefix}/m/{name}"] = arr
        for name, arr in self.v.items():
            out[f"{prefix}/v/{name}"] = arr
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays[f"{prefix}/t"][0])
        self.m = {}
        self.v = {}
        for key, arr in arrays.items():
            if key.startswith(f"{prefix}/m/"):
                self.m[key[len(prefix) + 3 :]] = arr.copy()
            elif key.startswith(f"{prefix}/v/"):
                self.v[key[len(prefix) + 3 :]] = arr.copy()


class AdamW(Adam):
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01):
        super().__init__(lr, betas, eps)
        self.weight_decay = weight_decay
