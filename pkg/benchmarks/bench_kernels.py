"""Time each hot kernel under numba and under the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Numba variants are warmed up once first, so compile time is excluded.
"""

import argparse
import timeit

import numpy as np

from motioncopy import _kernels


def cases(rng):
    x = rng.normal(size=(64, 256))
    cost = rng.uniform(size=(64, 64))
    kernel = np.maximum(np.exp(-(cost - cost.min(axis=1, keepdims=True)) / 0.01), 1e-12)
    fg = rng.integers(0, 256, (512, 512, 3), dtype=np.uint8)
    bg = rng.integers(0, 256, (512, 512, 3), dtype=np.uint8)
    mask = rng.uniform(size=(512, 512))
    res = rng.integers(-300, 300, (512, 512, 3)).astype(np.int16)
    return [
        ("pairwise_l1 64x256", "pairwise_l1", (x,)),
        ("sinkhorn 64x64 S=100", "sinkhorn_scaling", (kernel, 100, 1e-12)),
        ("fuse 512x512", "fuse", (fg, bg, mask)),
        ("saturating_add 512x512", "saturating_add", (fg, res)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'kernel':<26}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for label, name, call_args in cases(rng):
        fn_np = getattr(_kernels, f"{name}_numpy")
        fn_nb = getattr(_kernels, f"{name}_numba")
        fn_nb(*call_args)
        t_np = min(timeit.repeat(lambda: fn_np(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: fn_nb(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<26}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
