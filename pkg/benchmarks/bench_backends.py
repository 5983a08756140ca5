#!/usr/bin/env python3
"""Timing comparison of the compute backends.

Runs the direct uniform convolution, the per-pixel (field-driven)
convolution, and one end-to-end solve on every importable backend, then
prints a table with the speedup of the compiled extension over the
NumPy/SciPy fallback.  Engines are forced to "direct" so the numbers
measure the backend hot loops, not the FFT path.
"""

import argparse
import time

import numpy as np

from hqsdeblur import backend
from hqsdeblur.hqs import HqsConfig, chqs
from hqsdeblur.imagecore import Boundary, Kernel, conv2d
from hqsdeblur.nonuniform import varying_conv
from hqsdeblur.synthetic import blur_pair, corpus_image, shake_kernels


def median_seconds(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def timed_per_backend(fn, repeats):
    timings = {}
    for name in backend.available():
        previous = backend.use(name)
        try:
            timings[name] = median_seconds(fn, repeats)
        finally:
            backend.use(previous)
    return timings


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="repeats per convolution case (median reported)")
    parser.add_argument("--solve-repeats", type=int, default=1,
                        help="repeats for the end-to-end solve case")
    args = parser.parse_args()

    rng = np.random.default_rng(42)
    rows = []

    for side in (64, 128, 256):
        img = rng.random((side, side))
        for ker_side in (7, 15):
            taps = rng.random((ker_side, ker_side))
            ker = Kernel(taps / taps.sum())
            rows.append((
                f"uniform conv {side}x{side}, kernel {ker_side}x{ker_side}",
                timed_per_backend(
                    lambda: conv2d(img, ker, Boundary.REPLICATE, engine="direct"),
                    args.repeats)))

    img = rng.random((128, 128))
    for count in (2, 8, 32):
        stack = rng.random((count, 15, 15))
        stack /= stack.sum(axis=(1, 2), keepdims=True)
        field = rng.integers(0, count, size=img.shape)
        rows.append((
            f"varying conv 128x128, {count} distinct 15x15 kernels",
            timed_per_backend(
                lambda: varying_conv(img, field, stack, Boundary.REPLICATE,
                                     engine="direct"),
                args.repeats)))

    truth, y = blur_pair(corpus_image(0, side=160), shake_kernels()[0], 2.0,
                         seed=4000)
    cfg = HqsConfig()
    rows.append((
        f"end-to-end solve {y.shape[0]}x{y.shape[1]}",
        timed_per_backend(lambda: chqs(y, shake_kernels()[0], cfg),
                          args.solve_repeats)))

    names = backend.available()
    print(f"backends: {', '.join(names)} (default {backend.active_name()})")
    header = f"{'case':<48}" + "".join(f"{n:>12}" for n in names)
    if len(names) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, timings in rows:
        line = f"{label:<48}"
        for n in names:
            line += f"{timings[n] * 1e3:>10.2f}ms"
        if len(names) > 1:
            line += f"{timings['python'] / timings['cython']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
