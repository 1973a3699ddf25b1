"""Compiled against pure-Python Green kernels.

Run ``python benchmarks/bench_kernels.py``. Prints the best of several
timings for each kernel and backend, their ratio and the largest
difference between the two results.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from alexsurf import _kernels_py

try:
    from alexsurf import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _cases(n_targets: int, n_sources: int, seed: int):
    rng = np.random.default_rng(seed)
    s_t = rng.normal(size=(n_targets, 3))
    s_t /= np.linalg.norm(s_t, axis=1, keepdims=True)
    s_s = rng.normal(size=(n_sources, 3))
    s_s /= np.linalg.norm(s_s, axis=1, keepdims=True)
    w = rng.normal(size=n_sources)
    t_t = rng.random((n_targets, 2))
    t_s = rng.random((n_sources, 2))
    dx, dy = rng.random(n_targets * 16) - 0.5, rng.random(n_targets * 16) - 0.5
    return {
        "sphere_green_sum": (s_t, s_s, w),
        "torus_green_sum": (t_t, t_s, w),
        "torus_green_diff": (dx, dy),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--targets", type=int, default=1000)
    ap.add_argument("--sources", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _compiled is None:
        print("compiled extension not built; only the python backend is available")
    cases = _cases(args.targets, args.sources, args.seed)
    print(f"{'kernel':<18} {'python s':>10} {'compiled s':>11} {'speedup':>8} {'max diff':>10}")
    for name, inputs in cases.items():
        py = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat))
        if _compiled is None:
            print(f"{name:<18} {t_py:10.4f} {'-':>11} {'-':>8} {'-':>10}")
            continue
        cc = getattr(_compiled, name)
        t_cc = min(timeit.repeat(lambda: cc(*inputs), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(np.asarray(py(*inputs)) - np.asarray(cc(*inputs)))))
        print(f"{name:<18} {t_py:10.4f} {t_cc:11.4f} {t_py / t_cc:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
