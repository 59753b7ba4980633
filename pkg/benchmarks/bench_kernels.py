"""Time the compiled and pure-numpy paths of the direct kernels.

Run with ``python benchmarks/bench_kernels.py``; pass ``--n`` for the grid size.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from landaukit import _accel
from landaukit.collision import grad
from landaukit.fields import VelocityGrid
from landaukit.kernel import KernelModel
from landaukit.stepper import maxwellian


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    grid = VelocityGrid(args.n, 4.0)
    model = KernelModel(-3.0, 0.5, 1.0)
    values = maxwellian(grid)
    pts = grid.points
    flat = values.ravel()
    grads = np.moveaxis(grad(np.log(values), grid.h), 0, -1).reshape(-1, 3)
    samples = np.random.default_rng(0).uniform(-4.0, 4.0, size=(200_000, 3))
    cases = {
        "matrix convolution": lambda use: _accel.direct_matrix_convolution(
            pts, pts, flat, grid.cell_volume, model, "mollified", use_numba=use
        ),
        "pair dissipation": lambda use: _accel.direct_pair_dissipation(
            pts, flat, grads, grid.cell_volume, model, "mollified", use_numba=use
        ),
        "trilinear sampling": lambda use: _accel.trilinear_sample(values, -4.0, grid.h, samples, use_numba=use),
    }
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy path runs")
    print(f"grid {args.n}^3, best of {args.repeat}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, fn in cases.items():
        ref = fn(False)
        t_np = best_of(lambda: fn(False), args.repeat)
        if _accel.NUMBA_AVAILABLE:
            fast = fn(True)  # compile outside the timing
            t_nb = best_of(lambda: fn(True), args.repeat)
            diff = float(np.max(np.abs(np.asarray(fast) - np.asarray(ref))) / max(np.max(np.abs(ref)), 1e-300))
            print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>15.2e}")
        else:
            print(f"{name:<22}{t_np:>12.4f}{'-':>12}{'-':>10}{'-':>15}")


if __name__ == "__main__":
    main()
