"""Compiled versus numpy stencil kernel on square-function and maximal workloads.

Usage: python3 benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from tentlab import _kernels
from tentlab.grid import TimeGrid, make_grid
from tentlab.tent import ConeIndex, _all_points


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run(sizes, repeat: int) -> list[dict]:
    rows = []
    rng = np.random.default_rng(0)
    for n in sizes:
        g = make_grid(2, n)
        T = TimeGrid.default(g)
        cone = ConeIndex(g, T)
        stack = rng.random((T.count,) + g.shape)
        centers = _all_points(g)
        for label, use_max in (("sum", False), ("max", True)):
            args = (stack, cone.offsets, cone.first_level, centers, use_max)
            fast = _kernels.stencil_reduce(*args)
            slow = _kernels.pure_stencil_reduce(*args)
            err = float(np.abs(fast - slow).max() / max(np.abs(slow).max(), 1e-300))
            tf = _best(lambda: _kernels.stencil_reduce(*args), repeat)
            ts = _best(lambda: _kernels.pure_stencil_reduce(*args), repeat)
            rows.append({"N": n, "op": label, "offsets": len(cone.offsets), "backend": _kernels.BACKEND,
                         "selected_s": tf, "numpy_s": ts, "speedup": ts / tf, "max_rel_diff": err})
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    rows = run(args.sizes, args.repeat)
    print(f"{'N':>5} {'op':>4} {'offsets':>8} {'backend':>8} {'selected':>10} {'numpy':>10} {'speedup':>8} {'diff':>9}")
    for r in rows:
        print(f"{r['N']:>5} {r['op']:>4} {r['offsets']:>8} {r['backend']:>8} {r['selected_s']:>10.4f} "
              f"{r['numpy_s']:>10.4f} {r['speedup']:>8.1f} {r['max_rel_diff']:>9.1e}")


if __name__ == "__main__":
    main()
