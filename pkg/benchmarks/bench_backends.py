"""Compare the compiled and pure-numpy minimisation backends.

Runs the same grid scan on both backends and reports wall time and the
largest ground-energy disagreement.  The first compiled run includes JIT
compilation, so a small warmup scan runs first.
"""

import argparse
import time

import numpy as np

from ddphase import kernels
from ddphase.phase_diagram import scan_ground


def timed_scan(backend, config, row, n, seed):
    kernels.use_backend(backend)
    t0 = time.perf_counter()
    grid = scan_ground(config, row, shape=(n, n), seed=seed)
    return time.perf_counter() - t0, grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    ap.add_argument("--config", default="V")
    ap.add_argument("--grow", default="g3")
    ap.add_argument("--sizes", type=int, nargs="+", default=[41, 101, 201])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = ["numpy"]
    try:
        kernels.use_backend("numba")
        backends.insert(0, "numba")
        timed_scan("numba", args.config, args.grow, 11, args.seed)  # JIT
    except ImportError:
        print("numba not importable; timing the numpy backend alone")

    print(f"config={args.config} grow={args.grow} seed={args.seed}")
    print(f"{'nodes':>10} " + "".join(f"{b + ' (s)':>12}" for b in backends)
          + f"{'speedup':>10}{'max |dE|':>12}")
    for n in args.sizes:
        times = {}
        grids = {}
        for b in backends:
            times[b], grids[b] = timed_scan(b, args.config, args.grow, n,
                                            args.seed)
        if len(backends) == 2:
            diff = float(np.max(np.abs(
                grids["numba"].energy - grids["numpy"].energy)))
            ratio = times["numpy"] / times["numba"]
            print(f"{n * n:>10} {times['numba']:>11.3f} {times['numpy']:>11.3f}"
                  f"{ratio:>9.1f}x{diff:>12.2e}")
        else:
            print(f"{n * n:>10} {times['numpy']:>11.3f}")

    kernels.use_backend("auto")


if __name__ == "__main__":
    main()
