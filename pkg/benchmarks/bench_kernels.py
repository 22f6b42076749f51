"""Benchmark: compiled kernel core vs the pure numpy fallback.

Run: python benchmarks/bench_kernels.py [--repeats N]
Prints per-kernel timings and verifies the two backends agree bit-for-bit
on every benchmarked input.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from portraitforge import kernels


def time_fn(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--size", type=int, default=512)
    args = parser.parse_args()

    pure = kernels.get_backend("python")
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return

    n = args.size
    rng = np.random.default_rng(0)
    img = rng.random((n, n, 3)).astype(np.float32)
    mask = rng.random((n, n)) > 0.9
    inv = np.array([[0.97, 0.05, -3.0], [-0.04, 1.02, 2.0]])

    cases = [
        ("warp_bilinear", lambda k: k.warp_bilinear(img, inv, n, n)),
        ("box_blur r=4", lambda k: k.box_blur(img, 4)),
        ("disc_dilate r=12", lambda k: k.disc_dilate(mask, 12)),
        ("noise_field", lambda k: k.noise_field(12345, n, n)),
    ]

    print(f"input {n}x{n}, best of {args.repeats}")
    print(f"{'kernel':<18} {'python':>10} {'compiled':>10} {'speedup':>8}  bit-equal")
    for name, fn in cases:
        t_py, out_py = time_fn(lambda: fn(pure), args.repeats)
        t_cy, out_cy = time_fn(lambda: fn(compiled), args.repeats)
        equal = np.array_equal(out_py, out_cy)
        print(f"{name:<18} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
              f"{t_py / t_cy:>7.2f}x  {equal}")
        if not equal:
            raise SystemExit(f"backend mismatch in {name}")


if __name__ == "__main__":
    main()
