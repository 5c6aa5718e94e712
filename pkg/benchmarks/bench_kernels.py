"""Time the numpy kernels against their numba counterparts.

Run as `python3 benchmarks/bench_kernels.py [--rows N] [--cols M]`.
The numba functions are called once before timing so compilation cost
does not pollute the numbers.
"""

import argparse
import time

import numpy as np

from ropeflow import _kernels_numpy as knp

try:
    from ropeflow import _kernels_numba as knb
except ImportError:
    knb = None


def bench(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--rows", type=int, default=2048)
    parser.add_argument("--cols", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n, d = args.rows, args.cols
    x = rng.normal(size=(n, d))
    dy = rng.normal(size=(n, d))
    v = rng.normal(size=(n, d))
    angles = rng.normal(size=(n, d // 2))
    cos_t, sin_t = np.cos(angles), np.sin(angles)
    scores = rng.normal(size=(n, n))
    a = knp.softmax_rows(scores)
    da = rng.normal(size=(n, n))

    cases = [
        ("gelu", (x,)),
        ("gelu_grad", (x, dy)),
        ("rotary_rotate", (v, cos_t, sin_t)),
        ("softmax_rows", (scores,)),
        ("softmax_rows_grad", (a, da)),
        ("entropy_rows", (a, 1e-12)),
    ]

    print(f"rows={n} cols={d} repeat={args.repeat} (best of)")
    print(f"{'kernel':<20}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, case_args in cases:
        t_np = bench(getattr(knp, name), case_args, args.repeat)
        if knb is None:
            print(f"{name:<20}{t_np * 1e3:>10.3f}ms{'n/a':>12}{'':>10}")
            continue
        fn = getattr(knb, name)
        fn(*case_args)  # compile outside the timer
        t_nb = bench(fn, case_args, args.repeat)
        print(f"{name:<20}{t_np * 1e3:>10.3f}ms{t_nb * 1e3:>10.3f}ms"
              f"{t_np / t_nb:>9.2f}x")


if __name__ == "__main__":
    main()
