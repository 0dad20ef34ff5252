"""Timing comparison of the jitted and numpy kernel backends.

Runs the forward and forward+backward passes for a few representative layer
shapes and batch sizes against every available backend, and prints a table of
median wall times with the speedup of the jitted path over the numpy one.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from seqlabel.kernels import EMPTY_MASK, available_backends, get_backend
from seqlabel.nnet import DenseNet

SHAPES = {
    "cond-small": [9, 32, 32, 1],
    "cond-wide": [18, 300, 300, 1],
    "base": [100, 64, 64, 6],
}
BATCHES = (64, 1024)


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return sorted(times)[len(times) // 2]


def bench(repeats):
    backends = available_backends()
    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(backends)}; median of {repeats} runs, times in ms")
    header = f"{'shape':<12} {'batch':>6} {'pass':<10}"
    for name in backends:
        header += f" {name:>10}"
    if "numba" in backends and "numpy" in backends:
        header += f" {'np/numba':>9}"
    print(header)

    for label, sizes in SHAPES.items():
        net = DenseNet.init(sizes, rng)
        sizes_arr = net.layer_sizes
        for batch in BATCHES:
            x = rng.random((batch, sizes[0]))
            upstream = np.ones((batch, sizes[-1]))
            for op in ("forward", "fwd+bwd"):
                row = f"{label:<12} {batch:>6} {op:<10}"
                results = {}
                for name in backends:
                    mod = get_backend(name)

                    def once():
                        acts = mod.forward_acts(net.params, sizes_arr, x, EMPTY_MASK)
                        if op == "fwd+bwd":
                            mod.backward_acts(net.params, sizes_arr, x, acts, EMPTY_MASK, upstream)

                    once()  # warm the jit cache / BLAS threads before timing
                    results[name] = median_time(once, repeats)
                    row += f" {1000 * results[name]:>10.3f}"
                if "numba" in results and "numpy" in results:
                    row += f" {results['numpy'] / results['numba']:>8.2f}x"
                print(row)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=9, help="timed runs per cell")
    args = parser.parse_args()
    bench(args.repeats)


if __name__ == "__main__":
    main()
