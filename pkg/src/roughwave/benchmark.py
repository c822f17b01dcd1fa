"""Micro-benchmark of the stepping kernel: compiled extension vs numpy fallback.

Run as `python -m roughwave.benchmark [n_sites] [n_levels]`.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from . import _kernels_py
from .hilbert import make_params
from .noise import Lattice, SlabSampler, table_for_lattice

try:
    from . import _kernels

    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False


def time_kernel(step, n_sites: int, n_levels: int, repeats: int = 5) -> float:
    rng = np.random.default_rng(0)
    n0 = n_sites // 2 + 1
    prev0 = rng.normal(1.0, 0.1, n0)
    cur0 = rng.normal(1.0, 0.1, n0 - 1)
    masses = rng.normal(0.0, 0.05, (n_levels, n0))
    best = float("inf")
    for _ in range(repeats):
        prev, cur = prev0.copy(), cur0.copy()
        t0 = time.perf_counter()
        for k in range(n_levels):
            out = np.empty_like(prev)
            step(prev, cur, masses[k][: len(out)], out)
            prev, cur = cur, out
        best = min(best, time.perf_counter() - t0)
    return best


def time_sampling(n_sites: int, n_slabs: int) -> float:
    params = make_params(0.35)
    d = 0.05
    w = n_sites // 2
    lat = Lattice(delta=d, n_levels=max(n_slabs, 1), x_min=-w * d, x_max=w * d)
    sampler = SlabSampler(table_for_lattice(lat, params), lat)
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    for _ in range(n_slabs):
        sampler.draw(rng)
    return time.perf_counter() - t0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    n_sites = int(argv[0]) if len(argv) > 0 else 8000
    n_levels = int(argv[1]) if len(argv) > 1 else 200
    site_steps = (n_sites // 2) * n_levels

    t_py = time_kernel(_kernels_py.leapfrog_step, n_sites, n_levels)
    print(f"leapfrog numpy fallback : {t_py*1e3:8.2f} ms  ({t_py/site_steps*1e9:6.2f} ns/site-step)")
    if HAVE_EXT:
        t_cy = time_kernel(_kernels.leapfrog_step, n_sites, n_levels)
        print(f"leapfrog compiled       : {t_cy*1e3:8.2f} ms  ({t_cy/site_steps*1e9:6.2f} ns/site-step)")
        print(f"speedup                 : {t_py/t_cy:8.2f}x")
    else:
        print("compiled kernel not built (pure-python install)")
    t_fft = time_sampling(n_sites, 50)
    print(f"slab sampling (50 slabs): {t_fft*1e3:8.2f} ms  (FFT-bound, shared by both builds)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
