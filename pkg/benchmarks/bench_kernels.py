#!/usr/bin/env python3
"""Compare the numba kernels with their numpy fallbacks.

Both paths are called directly, so the ``BOHMION_DYN_NO_NUMBA`` flag does not
matter here. Each case checks that the two results agree before timing.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from bohmion_dyn import dynamics, kernels
from bohmion_dyn.kernels import Kernel
from bohmion_dyn.numerics import Grid


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_pair_integrals(n_grid, n_bohmions, dim, repeat):
    rng = np.random.default_rng(0)
    grid = Grid.uniform(-6.0, 6.0, n_grid, dim)
    kern = Kernel("gaussian", 0.5, dim)
    X = grid.points()
    Q = rng.uniform(-2.0, 2.0, size=(n_bohmions, dim))
    w = rng.dirichlet(np.ones(n_bohmions))
    C = np.outer(w, w) / 8.0
    args = (X, Q, w)
    tail = (1e-14, grid.cell_volume, C, True)

    def nb():
        return kernels._pair_integrals_nb(*args, kern.code, kern.width, kern.norm, *tail)

    def np_():
        return kernels._pair_integrals_np(*args, kern, *tail)

    (I1, d1), (I2, d2) = nb(), np_()
    err = max(np.max(np.abs(I1 - I2)) / np.max(np.abs(I1)), np.max(np.abs(d1 - d2)) / np.max(np.abs(d1)))
    return best_of(nb, repeat), best_of(np_, repeat), err


def bench_electronic_flow(n_bohmions, repeat):
    rng = np.random.default_rng(1)
    b = rng.normal(size=(n_bohmions, 3)) * 0.2
    h = rng.normal(size=(n_bohmions, 3))
    I = rng.uniform(0.0, 1.0, size=(n_bohmions, n_bohmions))
    I = 0.5 * (I + I.T)

    def nb():
        out = b.copy()
        dynamics._electronic_flow_nb(out, h, I, 0.5, 1e-3, 1.0)
        return out

    def np_():
        return dynamics._electronic_flow_np(b.copy(), h, I, 0.5, 1e-3, 1.0)

    err = np.max(np.abs(nb() - np_()))
    return best_of(nb, repeat), best_of(np_, repeat), err


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'case':<32} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8} {'max rel diff':>13}")
    cases = [
        ("pair_integrals 1d n=256 N=2", lambda: bench_pair_integrals(256, 2, 1, args.repeat)),
        ("pair_integrals 1d n=1024 N=8", lambda: bench_pair_integrals(1024, 8, 1, args.repeat)),
        ("pair_integrals 2d n=64^2 N=4", lambda: bench_pair_integrals(64, 4, 2, args.repeat)),
        ("pair_integrals 2d n=128^2 N=8", lambda: bench_pair_integrals(128, 8, 2, args.repeat)),
        ("electronic_flow N=2", lambda: bench_electronic_flow(2, args.repeat)),
        ("electronic_flow N=32", lambda: bench_electronic_flow(32, args.repeat)),
    ]
    for name, run in cases:
        t_nb, t_np, err = run()
        print(f"{name:<32} {1e3 * t_nb:>11.3f} {1e3 * t_np:>11.3f} {t_np / t_nb:>8.1f} {err:>13.2e}")


if __name__ == "__main__":
    main()
