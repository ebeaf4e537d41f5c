#!/usr/bin/env python3
"""Benchmark the compiled convolution kernels against the numpy fallback.

Times forward, weight-gradient, and data-gradient kernels on the shapes
the encoder/decoder actually uses during training, plus a couple of
larger stress shapes. Run after building the extension:

    python benchmarks/bench_kernels.py [--repeat 30]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from riverflow.nn import _conv_numpy, kernels

try:
    from riverflow.nn import _convext
except ImportError:
    _convext = None

# (label, batch, c_in, c_out, height, width, stride)
CASES = [
    ("enc stage 1 (41x64)", 32, 1, 8, 41, 64, 2),
    ("enc stage 2 (21x32)", 32, 8, 16, 21, 32, 2),
    ("enc stage 3 (11x16)", 32, 16, 32, 11, 16, 2),
    ("paper stage 1 (41x501)", 8, 1, 8, 41, 501, 2),
    ("wide channels (21x32)", 32, 32, 64, 21, 32, 1),
]


def time_fn(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_case(label, b, c_in, c_out, h, w, stride, repeat):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(b, c_in, h, w))
    weights = np.ascontiguousarray(rng.normal(size=(c_out, c_in, 3, 3)))
    x_pad, _, _ = kernels.pad_input(x, 3, stride)
    dy = np.ascontiguousarray(
        _conv_numpy.conv2d_forward(x_pad, weights, stride))

    rows = []
    impls = [("numpy", _conv_numpy)]
    if _convext is not None:
        impls.append(("cython", _convext))
    for name, impl in impls:
        fw = time_fn(lambda: impl.conv2d_forward(x_pad, weights, stride), repeat)
        bw_w = time_fn(lambda: impl.conv2d_backward_weights(x_pad, dy, 3, 3, stride),
                       repeat)
        bw_d = time_fn(lambda: impl.conv2d_backward_data(dy, weights, x_pad.shape,
                                                         stride), repeat)
        rows.append((name, fw, bw_w, bw_d))
    print(f"\n{label}  [B={b} {c_in}->{c_out} {h}x{w} s{stride}]")
    print(f"  {'impl':8s} {'forward':>10s} {'grad_w':>10s} {'grad_x':>10s}")
    for name, fw, bw_w, bw_d in rows:
        print(f"  {name:8s} {fw * 1e3:9.3f}ms {bw_w * 1e3:9.3f}ms {bw_d * 1e3:9.3f}ms")
    if len(rows) == 2:
        speed = [rows[0][i] / rows[1][i] for i in (1, 2, 3)]
        print(f"  {'speedup':8s} {speed[0]:9.2f}x {speed[1]:9.2f}x {speed[2]:9.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()
    print(f"active backend: {kernels.backend()}")
    if _convext is None:
        print("compiled extension unavailable; timing the fallback only")
    for case in CASES:
        run_case(*case, repeat=args.repeat)


if __name__ == "__main__":
    main()
