"""Compare the compiled and pure-Python kernel backends.

Run ``python benchmarks/bench_kernels.py``. Each kernel is timed on the same
inputs in both backends, and the outputs are checked for equality first.
"""

import argparse
import sys
import timeit

import numpy as np

from demodiff import kernels


def cases(scale):
    rng = np.random.default_rng(0)
    scores = rng.normal(size=(200 * scale, 2000))
    params = [(float(x), float(a), float(b)) for x, a, b in
              zip(rng.uniform(0, 1, 2000), rng.uniform(0.5, 50, 2000), rng.uniform(0.5, 50, 2000))]
    return {
        "random_words (100k words)": lambda k: k.random_words(7, 1 << 48, 0, 100_000 * scale),
        "uniform_indices (100k draws)": lambda k: k.uniform_indices(7, 1 << 48, 0, 100_000 * scale, 15468),
        "betainc (2k calls)": lambda k: [k.betainc(x, 1.0 - x, a, b) for x, a, b in params * scale],
        "top_r (r=5)": lambda k: k.top_r(scores, 5),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="timing repeats, best is kept")
    parser.add_argument("--scale", type=int, default=1, help="multiply problem sizes")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "c" not in backends:
        print("compiled backend not built; only the Python backend is available", file=sys.stderr)
    print(f"{'kernel':30s} " + " ".join(f"{n:>10s}" for n in backends) + "   speedup  identical")
    for name, fn in cases(args.scale).items():
        outs = {n: fn(k) for n, k in backends.items()}
        times = {n: min(timeit.repeat(lambda k=k: fn(k), number=1, repeat=args.repeat))
                 for n, k in backends.items()}
        row = f"{name:30s} " + " ".join(f"{times[n] * 1e3:8.2f}ms" for n in backends)
        if "c" in backends:
            row += f"  {times['python'] / times['c']:7.1f}x  {same(outs['c'], outs['python'])!s:>9s}"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
