"""Wall-clock comparison of the compiled and pure-Python chain kernels.

    python3 benchmarks/bench_kernels.py [--sweeps N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from wpt.backend import ChainKernels, compiled_available, simplified_module
from wpt.diffusion_limit import SimplifiedConfig
from wpt.mixture_targets import HatContext, gaussian_mixture
from wpt.tempered_targets import make_tempered
from wpt.tempering import Kernel, geometric_ladder
from wpt.samplers import KernelConfig


def _target(d=10):
    return gaussian_mixture([0.2, 0.8], [np.full(d, -10.0), np.full(d, 10.0)],
                            [9.0 * np.eye(d), np.eye(d)])


def bench_st(backend, sweeps, kind):
    t = _target()
    ctx = HatContext.from_gaussian_components(t)
    tt = make_tempered(t, kind, ctx)
    lad = geometric_ladder(7, 0.32)
    k = Kernel(KernelConfig(), lad.betas, t.dim)
    rng = np.random.default_rng(0)
    ut, z, um = rng.random((sweeps, 2)), rng.standard_normal((sweeps, 5, t.dim)), rng.random((sweeps, 5))
    lk = np.array([tt.log_pseudo_prior(b) for b in lad.betas])
    ck = ChainKernels(tt, backend)
    t0 = time.perf_counter()
    ck.st_chain(lad.betas, lk, np.full(t.dim, -10.0), 0, 5, k.code, False, k.log_scales.copy(),
                k.counts.copy(), 0, k.target_acc, ut, z, um)
    return time.perf_counter() - t0


def bench_pt(backend, sweeps, kind):
    t = _target()
    ctx = HatContext.from_gaussian_components(t)
    tt = make_tempered(t, kind, ctx)
    lad = geometric_ladder(8, 0.31)
    L = len(lad)
    k = Kernel(KernelConfig(), lad.betas, t.dim)
    rng = np.random.default_rng(0)
    us, z, um = rng.random((sweeps, 2)), rng.standard_normal((sweeps, L, 5, t.dim)), rng.random((sweeps, L, 5))
    ck = ChainKernels(tt, backend)
    t0 = time.perf_counter()
    ck.pt_chain(lad.betas, np.tile(np.full(t.dim, -10.0), (L, 1)), 5, k.code, False,
                k.log_scales.copy(), k.counts.copy(), 0, k.target_acc, us, z, um)
    return time.perf_counter() - t0


def bench_simplified(backend, steps):
    cfg = SimplifiedConfig(d=100, p=0.3)
    betas = cfg.ladder().betas
    rng = np.random.default_rng(0)
    g1, g2 = rng.standard_gamma(50.0, steps), rng.standard_gamma(50.0, steps)
    u = rng.random((steps, 3))
    mod = simplified_module(backend)
    t0 = time.perf_counter()
    mod.simplified_chain(betas, 100, 2.0, 2.0, 0.3, 0, 1, g1, g2, u, False)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sweeps", type=int, default=2000)
    args = ap.parse_args()
    if not compiled_available():
        print("compiled extension not built; only the Python backend is available")
        return
    n = args.sweeps
    rows = []
    for kind in ("power", "wsgm", "hat"):
        rows.append((f"ST {kind} ({n} sweeps, m=5, d=10)", bench_st("python", n, kind),
                     bench_st("compiled", n, kind)))
        rows.append((f"PT {kind} ({n} sweeps, 8 levels)", bench_pt("python", n // 4, kind) * 4,
                     bench_pt("compiled", n // 4, kind) * 4))
    steps = 50 * n
    rows.append((f"simplified process ({steps} steps, d=100)", bench_simplified("python", steps),
                 bench_simplified("compiled", steps)))
    print(f"{'case':48s} {'python s':>10s} {'compiled s':>11s} {'speed-up':>9s}")
    for name, py, c in rows:
        print(f"{name:48s} {py:10.3f} {c:11.4f} {py / c:8.1f}x")


if __name__ == "__main__":
    main()
