#!/usr/bin/env python3
"""Benchmark the jitted kernels against their pure-numpy fallbacks.

The same functions power the encoder forward/backward passes and the
spectral gate; this script times both backends on identical inputs and
reports the speedup. Sizes roughly match one training step of the base
encoder at batch 8.

Usage:
    python3 benchmarks/kernel_benchmark.py [--repeats N] [--scale S] [--json]
"""

import argparse
import json
import time

import numpy as np

from stutterkit import kernels


def timeit(fn, repeats):
    fn()  # warm (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def build_cases(scale):
    rng = np.random.default_rng(0)
    rows = int(4096 * scale)
    dim = 512
    seq = int(256 * scale)
    x = rng.standard_normal((rows, dim))
    dy = rng.standard_normal((rows, dim))
    w = rng.standard_normal(dim)
    b = rng.standard_normal(dim)
    scores = rng.standard_normal((int(64 * scale) * 8 * seq, seq) if seq else (8, 8))
    probs_seed = rng.standard_normal(scores.shape)
    flat = rng.standard_normal(rows * dim)
    grad = rng.standard_normal(rows * dim)
    mask = (rng.random((257, int(800 * scale) or 8)) > 0.5).astype(np.float64)

    def cases(impl):
        probs = impl.softmax_rows(probs_seed)
        _, xhat, rstd = impl.layernorm_fwd(x, w, b, 1e-5)
        moment1, moment2 = np.zeros_like(flat), np.zeros_like(flat)
        param = flat.copy()
        return {
            "gelu_fwd": lambda: impl.gelu_fwd(x),
            "gelu_bwd": lambda: impl.gelu_bwd(x, dy),
            "softmax_rows": lambda: impl.softmax_rows(scores),
            "softmax_rows_bwd": lambda: impl.softmax_rows_bwd(probs, probs_seed),
            "layernorm_fwd": lambda: impl.layernorm_fwd(x, w, b, 1e-5),
            "layernorm_bwd_dx": lambda: impl.layernorm_bwd_dx(dy, xhat, rstd),
            "adamw_update": lambda: impl.adamw_update(
                param, grad, moment1, moment2, 1e-3, 0.9, 0.999, 1e-8, 0.0, 0.1, 0.001
            ),
            "box_smooth_rows": lambda: impl.box_smooth_rows(mask, 2),
        }

    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0,
                        help="problem-size multiplier (use <1 on slow machines)")
    parser.add_argument("--json", action="store_true", dest="as_json")
    args = parser.parse_args()

    numpy_impl = kernels.get_impl("numpy")
    try:
        numba_impl = kernels.get_impl("numba")
    except ImportError:
        raise SystemExit("numba is not installed; nothing to compare")

    case_builder = build_cases(args.scale)
    numpy_cases = case_builder(numpy_impl)
    numba_cases = case_builder(numba_impl)

    results = []
    for name in numpy_cases:
        t_np = timeit(numpy_cases[name], args.repeats)
        t_nb = timeit(numba_cases[name], args.repeats)
        results.append(
            {"kernel": name, "numpy_ms": t_np * 1e3, "numba_ms": t_nb * 1e3,
             "speedup": t_np / t_nb if t_nb > 0 else float("inf")}
        )

    if args.as_json:
        print(json.dumps(results, indent=2))
        return
    print(f"{'kernel':<20} {'numpy ms':>10} {'numba ms':>10} {'speedup':>9}")
    print("-" * 52)
    for row in results:
        print(
            f"{row['kernel']:<20} {row['numpy_ms']:>10.3f} {row['numba_ms']:>10.3f} "
            f"{row['speedup']:>8.2f}x"
        )
    print(f"\nactive backend for the package: {kernels.BACKEND} "
          "(set STUTTERKIT_NUMBA=0 to force numpy)")


if __name__ == "__main__":
    main()
