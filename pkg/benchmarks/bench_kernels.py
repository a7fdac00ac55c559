"""Timing comparison of the pure-NumPy and compiled kernel backends.

Runs the graph-convolution and attention-fusion kernels (forward and
backward) on random inputs of a few sizes and prints per-call times for
whichever backends are importable.

Usage: python benchmarks/bench_kernels.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from retsimd.kernels import get_backend


def _time_call(fn, args, repeats: int) -> float:
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def _inputs(n: int, d: int, rng: np.random.Generator):
    a = rng.standard_normal((n, n))
    a = (a + a.T) / 2.0
    h = rng.standard_normal((n, d))
    w1 = rng.standard_normal((d, d)) / np.sqrt(d)
    b1 = rng.standard_normal(d) * 0.1
    w2 = rng.standard_normal((d, d)) / np.sqrt(d)
    b2 = rng.standard_normal(d) * 0.1
    e_v = rng.standard_normal(d)
    wq = rng.standard_normal((d, d)) / np.sqrt(d)
    wk = rng.standard_normal((d, d)) / np.sqrt(d)
    wv = rng.standard_normal((d, d)) / np.sqrt(d)
    return a, h, w1, b1, w2, b2, e_v, wq, wk, wv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    backends = {}
    for name in ("pure", "compiled"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"backend {name!r} unavailable, skipping")
    if not backends:
        return 1

    rng = np.random.default_rng(0)
    print(f"{'case':<28}" + "".join(f"{name:>14}" for name in backends))
    for n, d in ((6, 16), (6, 64), (32, 64), (128, 128)):
        a, h, w1, b1, w2, b2, e_v, wq, wk, wv = _inputs(n, d, rng)
        d_out = rng.standard_normal((n, d))
        d_e = rng.standard_normal(d)

        rows = {
            f"gcn fwd n={n} d={d}": lambda m: m.gcn2_forward(a, h, w1, b1, w2, b2),
            f"gcn bwd n={n} d={d}": lambda m: m.gcn2_backward(
                d_out, a, w1, w2, m.gcn2_forward(a, h, w1, b1, w2, b2)[1]
            ),
            f"attn fwd n={n} d={d}": lambda m: m.attn_fuse_forward(e_v, h, h, wq, wk, wv),
            f"attn bwd n={n} d={d}": lambda m: m.attn_fuse_backward(
                d_e, e_v, h, h, wq, wk, wv, m.attn_fuse_forward(e_v, h, h, wq, wk, wv)[1]
            ),
        }
        for label, runner in rows.items():
            cells = []
            for name, module in backends.items():
                best = _time_call(lambda: runner(module), (), args.repeats)
                cells.append(f"{best * 1e6:>11.1f} us")
            print(f"{label:<28}" + "".join(cells))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
