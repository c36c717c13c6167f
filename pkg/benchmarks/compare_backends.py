"""Time the compiled kernels against their pure numpy twins.

Run:  python3 benchmarks/compare_backends.py [--n-walkers 20000] [--chunk 512]

The two backends are bit-identical, so the comparison is purely about speed.
Numbers are medians over repeated calls on the same pre-drawn randomness.
"""

import argparse
import time

import numpy as np

from lqgsim import _kernels_py

try:
    from lqgsim import _kernels
except ImportError:
    _kernels = None


def median_time(fn, repeats=5):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def bench_tree(mod, n_up, rng):
    steps = np.repeat(np.array([1, -1], dtype=np.int8), n_up)
    rng.shuffle(steps)
    walk = np.cumsum(steps)
    steps = np.roll(steps, -(int(np.argmin(walk)) + 1))
    inc = rng.standard_normal(n_up + 1)

    def run():
        parents = mod.dyck_parents(steps)
        mod.propagate_labels(parents, inc)

    return median_time(run)


def bench_exit(mod, n_w, chunk, rng):
    n_side = 64
    weights = np.exp(rng.standard_normal(n_side * n_side))
    dirs = rng.integers(0, 4, size=(n_w, chunk)).astype(np.uint8)
    eholds = rng.exponential(size=(n_w, chunk))
    pos0 = rng.integers(0, n_side * n_side, size=n_w)

    def run():
        pos = pos0.copy()
        t = np.zeros(n_w)
        alive = np.ones(n_w, dtype=np.uint8)
        exit_t = np.zeros(n_w)
        mod.ctrw_exit_chunk(weights, n_side, pos, t, alive, exit_t, 11, 13, 144.0, dirs, eholds)

    return median_time(run)


def bench_record(mod, n_w, chunk, rng):
    n_side = 64
    weights = np.exp(rng.standard_normal(n_side * n_side))
    dirs = rng.integers(0, 4, size=(n_w, chunk)).astype(np.uint8)
    eholds = rng.exponential(size=(n_w, chunk))
    pos0 = rng.integers(0, n_side * n_side, size=n_w)
    marks = np.sort(rng.exponential(chunk / 4.0, size=16))

    def run():
        pos = pos0.copy()
        t = np.zeros(n_w)
        mark_idx = np.zeros(n_w, dtype=np.int64)
        rec = np.full((n_w, marks.size), -1, dtype=np.int64)
        mod.ctrw_record_chunk(weights, n_side, pos, t, mark_idx, marks, rec, dirs, eholds)

    return median_time(run)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-walkers", type=int, default=20_000)
    ap.add_argument("--chunk", type=int, default=512)
    ap.add_argument("--tree-size", type=int, default=200_000)
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not built; nothing to compare against")
        return

    rng = np.random.default_rng(0)
    rows = [
        ("dyck+labels", bench_tree(_kernels, args.tree_size, rng), bench_tree(_kernels_py, args.tree_size, rng)),
        ("ctrw exit", bench_exit(_kernels, args.n_walkers, args.chunk, rng), bench_exit(_kernels_py, args.n_walkers, args.chunk, rng)),
        ("ctrw record", bench_record(_kernels, args.n_walkers, args.chunk, rng), bench_record(_kernels_py, args.n_walkers, args.chunk, rng)),
    ]
    print(f"{'kernel':<14}{'cython':>12}{'pure':>12}{'speedup':>10}")
    for name, tc, tp in rows:
        print(f"{name:<14}{tc * 1e3:>10.1f}ms{tp * 1e3:>10.1f}ms{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
