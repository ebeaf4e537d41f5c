"""Convolution kernel dispatch: compiled extension plus numpy fallback.

The numpy implementation lowers convolution to an im2col gather and a BLAS
matmul. Measured on this code (see ``benchmarks/bench_kernels.py``), the
compiled direct loops only pay off where arithmetic intensity is too low
for the GEMM to matter but the strided gather is large: single-channel
inputs over big maps, i.e. the first encoder stage / last decoder stage on
full-reach grids. Dispatch routes the forward and data-gradient kernels to
the compiled path in exactly that regime (patch width ``c_in*kh*kw`` at
most ``DIRECT_PATCH_LIMIT`` and at least ``DIRECT_MIN_ROWS`` output
positions); everything else, including all weight gradients, stays on the
BLAS path, which wins there.

Set ``RIVERFLOW_NO_EXT=1`` before import to force the pure-numpy path
everywhere.
"""

from __future__ import annotations

import os

import numpy as np

from . import _conv_numpy

# measured crossover: direct loops win at/below this patch width ...
DIRECT_PATCH_LIMIT = 16
# ... and at/above this many batched output positions
DIRECT_MIN_ROWS = 32768

if os.environ.get("RIVERFLOW_NO_EXT"):
    _ext = None
else:
    try:
        from . import _convext as _ext
    except ImportError:  # uncompiled checkout
        _ext = None

BACKEND = "numpy" if _ext is None else "cython"


def backend() -> str:
    """Active kernel backend: 'cython' when the extension is loaded."""
    return BACKEND


def same_padding(size: int, k: int, stride: int) -> tuple[int, int, int]:
    """(out_size, pad_before, pad_after) for 'same' downsampling."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    before = total // 2
    return out, before, total - before


def pad_input(x: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, tuple, tuple]:
    """Zero-pad (B, C, H, W) for a 'same' convolution; returns pads used."""
    _, _, h, w = x.shape
    _, pt, pb = same_padding(h, k, stride)
    _, pl, pr = same_padding(w, k, stride)
    x_pad = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    return np.ascontiguousarray(x_pad), (pt, pb), (pl, pr)


def _use_direct(c_in: int, kh: int, kw: int, rows: int) -> bool:
    return (_ext is not None and c_in * kh * kw <= DIRECT_PATCH_LIMIT
            and rows >= DIRECT_MIN_ROWS)


def conv2d_forward(x_pad, weights, stride):
    c_out, c_in, kh, kw = weights.shape
    ho = (x_pad.shape[2] - kh) // stride + 1
    wo = (x_pad.shape[3] - kw) // stride + 1
    if _use_direct(c_in, kh, kw, x_pad.shape[0] * ho * wo):
        return _ext.conv2d_forward(x_pad, weights, stride)
    return _conv_numpy.conv2d_forward(x_pad, weights, stride)


def conv2d_backward_weights(x_pad, dy, kh, kw, stride):
    # the BLAS path wins across the measured range for weight gradients
    return _conv_numpy.conv2d_backward_weights(x_pad, dy, kh, kw, stride)


def conv2d_backward_data(dy, weights, pad_shape, stride):
    c_out, c_in, kh, kw = weights.shape
    rows = dy.shape[0] * dy.shape[2] * dy.shape[3]
    if _use_direct(c_in, kh, kw, rows):
        return _ext.conv2d_backward_data(dy, weights, pad_shape, stride)
    return _conv_numpy.conv2d_backward_data(dy, weights, pad_shape, stride)
