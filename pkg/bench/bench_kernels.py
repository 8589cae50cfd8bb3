"""Time the compiled and numpy Gram-matrix kernels against each other.

Usage: python3 bench/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from jumbo import _kernels_py

try:
    from jumbo import _kernels_cy
except ImportError:
    _kernels_cy = None

KINDS = {"Matern52": _kernels_py.MATERN52, "RBF": _kernels_py.RBF, "Linear": _kernels_py.LINEAR}
SIZES = [(50, 1), (200, 4), (500, 8), (1000, 32)]


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - tic)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels_cy is None:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<9} {'op':<15} {'n':>5} {'d':>3} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>9}")
    for name, code in KINDS.items():
        for n, d in SIZES:
            X = rng.random((n, d))
            for op in ("gram", "gram_with_grad"):
                if op == "gram":
                    py = lambda: _kernels_py.gram(X, X, code, 0.5, 1.3)
                    cy = (lambda: _kernels_cy.gram(X, X, code, 0.5, 1.3)) if _kernels_cy else None
                else:
                    py = lambda: _kernels_py.gram_with_grad(X, code, 0.5, 1.3)
                    cy = (lambda: _kernels_cy.gram_with_grad(X, code, 0.5, 1.3)) if _kernels_cy else None
                t_py = best_time(py, args.repeats)
                if cy is None:
                    print(f"{name:<9} {op:<15} {n:>5} {d:>3} {t_py * 1e3:>10.3f} {'-':>10} {'-':>8} {'-':>9}")
                    continue
                t_cy = best_time(cy, args.repeats)
                a, b = py(), cy()
                a, b = (a, b) if op == "gram" else (a[0], b[0])
                diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
                print(f"{name:<9} {op:<15} {n:>5} {d:>3} {t_py * 1e3:>10.3f} {t_cy * 1e3:>10.3f} "
                      f"{t_py / t_cy:>7.1f}x {diff:>9.1e}")


if __name__ == "__main__":
    main()
