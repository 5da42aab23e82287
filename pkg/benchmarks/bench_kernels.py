"""Compare the compiled kernels against the numpy fallback.

Times the two order-3 hot kernels at a few sizes, then a full solver run
through each backend. The backend is fixed at import time, so the numpy
side of the solver comparison runs in a subprocess with
CPDHR_DISABLE_NUMBA=1.

Usage: python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cpdhr import kernels  # noqa: E402

SIZES = [
    ((10, 10, 15), 3),
    ((30, 30, 30), 5),
    ((60, 40, 50), 8),
]

SOLVER_SNIPPET = """
import time
from cpdhr import CpdOptions, cpd, kernels
from cpdhr.scene import build_scene_tensor, default_scene, synthetic_sources

scene = default_scene()
sources = synthetic_sources(scene.time_len, scene.rank, seed=0)
t, _ = build_scene_tensor(scene, sources)
cpd(t, CpdOptions(rank=3, init=1))  # warm the kernels before timing
best = float("inf")
for s in range(5):
    t0 = time.perf_counter()
    cpd(t, CpdOptions(rank=3, init=s + 2))
    best = min(best, time.perf_counter() - t0)
backend = "numba" if kernels.NUMBA_ENABLED else "numpy"
print(f"solver[{backend}] best of 5 runs: {best * 1e3:.1f} ms")
"""


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def best_of(fn, repeats=7):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rng = np.random.default_rng(0)
    print(f"numba backend active: {kernels.NUMBA_ENABLED}")
    header = f"{'kernel':14s} {'shape':14s} {'rank':>4s} {'numpy':>10s}"
    if kernels.NUMBA_ENABLED:
        header += f" {'numba':>10s} {'speedup':>8s}"
    print(header)
    for dims, rank in SIZES:
        t = crandn(rng, *dims)
        factors = [crandn(rng, d, rank) for d in dims]
        jobs = [
            ("mttkrp3", lambda: kernels.mttkrp3_numpy(t, *factors, 1),
             lambda: kernels.mttkrp3_jit(t, *factors, 1)),
            ("reconstruct3", lambda: kernels.reconstruct3_numpy(*factors),
             lambda: kernels.reconstruct3_jit(*factors)),
        ]
        for name, numpy_fn, jit_fn in jobs:
            row = f"{name:14s} {str(dims):14s} {rank:4d}"
            t_np = best_of(numpy_fn)
            row += f" {t_np * 1e6:8.0f}us"
            if kernels.NUMBA_ENABLED:
                jit_fn()  # compile outside the timing
                t_jit = best_of(jit_fn)
                row += f" {t_jit * 1e6:8.0f}us {t_np / t_jit:7.1f}x"
            print(row)


def bench_solver():
    print()
    for disable in ("0", "1"):
        env = dict(os.environ, CPDHR_DISABLE_NUMBA=disable)
        env["PYTHONPATH"] = os.pathsep.join(
            [os.path.join(os.path.dirname(__file__), "..", "src"),
             env.get("PYTHONPATH", "")]
        )
        out = subprocess.run(
            [sys.executable, "-c", SOLVER_SNIPPET],
            env=env, capture_output=True, text=True, check=True,
        )
        print(out.stdout.strip())


if __name__ == "__main__":
    bench_kernels()
    bench_solver()
