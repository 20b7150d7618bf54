"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times expression evaluation over one dense g grid, over many sweep-sized
grids, and the n-fold moment sum at
the largest supported size (8 outcomes, 4th moment), and checks that both
backends agree.
"""

import argparse
import timeit

import numpy as np

from ctxvalues import _pykernels
from ctxvalues.gexpr import parse

try:
    from ctxvalues import _ckernels
except ImportError:
    _ckernels = None

EXPR = "sqrt(1/6 - g - g^2) * (1/2 + g)^3 - sqrt(1/3 + g^2) / (2 + g)"


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; only the Python backend is available")
        return 1

    ops, consts, _ = parse(EXPR)._program
    gs = np.linspace(0.0, 0.1, 200_000)
    rng = np.random.default_rng(0)
    m, d, n = 8, 3, 4
    alphas = rng.normal(size=m)
    effects = rng.normal(size=(m, d, d)) + 1j * rng.normal(size=(m, d, d))
    rho = np.eye(d, dtype=complex) / d

    small = np.geomspace(1e-4, 1e-2, 21)

    def many_small(k):
        for _ in range(2000):
            out = k.rpn_eval(ops, consts, small)
        return out

    cases = [
        (f"rpn_eval, {len(gs)} points", lambda k: k.rpn_eval(ops, consts, gs)),
        ("rpn_eval, 2000 x 21 points", many_small),
        (f"moment_sum, M={m} n={n} d={d}", lambda k: k.moment_sum(alphas, effects, rho, n)),
    ]
    print(f"{'kernel':<32} {'python [s]':>12} {'cython [s]':>12} {'speedup':>9}  agree")
    for name, call in cases:
        py, cy = call(_pykernels), call(_ckernels)
        if isinstance(py, tuple):
            agree = py[1:] == cy[1:] and np.array_equal(py[0], cy[0])
        else:
            agree = abs(py - cy) <= 1e-10 * max(1.0, abs(py))
        t_py = _time(lambda: call(_pykernels), args.repeat)
        t_cy = _time(lambda: call(_ckernels), args.repeat)
        print(f"{name:<32} {t_py:12.4f} {t_cy:12.4f} {t_py / t_cy:8.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
