"""Time the compiled kernel core against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 500 2000 5000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from rieszlab import _pykernels

try:
    from rieszlab import _ckernels
except ImportError:
    _ckernels = None


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 5000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled core not built; run `pip install --no-build-isolation -e .` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'N':>7}{'python [s]':>12}{'cython [s]':>12}{'speedup':>9}")
    for n in args.sizes:
        X = rng.normal(size=(n, 3))
        m = rng.random(n)
        P = rng.normal(size=(max(n // 4, 1), 3)) + 4
        k = min(n, 300)
        cases = {
            "pair_power": lambda mod: mod.pair_power(X, X, -1.0),
            "apply_power": lambda mod: mod.apply_power(X, m, P, -0.5),
            "greedy_transport": lambda mod: mod.greedy_transport(X[:k], m[:k], P[:k], m[:k], 2.0),
        }
        for name, call in cases.items():
            tp = _best(lambda: call(_pykernels), args.repeat)
            tc = _best(lambda: call(_ckernels), args.repeat)
            print(f"{name:<18}{n:>7}{tp:>12.4f}{tc:>12.4f}{tp / tc:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
