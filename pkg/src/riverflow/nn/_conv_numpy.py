"""Pure-numpy convolution kernels (im2col + BLAS matmul).

Reference implementation for the compiled extension; selected automatically
when the extension is unavailable or disabled. All arrays are float64 and
C-contiguous; layouts are (batch, channels, height, width) for activations
and (c_out, c_in, kh, kw) for weights.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x_pad: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, Hp, Wp) -> (B*Ho*Wo, C*kh*kw) patch matrix."""
    win = sliding_window_view(x_pad, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    # (B, Ho, Wo, C, kh, kw) so rows vary batch-major, channel within a row
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), ho, wo


def conv2d_forward(x_pad: np.ndarray, weights: np.ndarray, stride: int) -> np.ndarray:
    """Correlate padded input with weights; returns (B, C_out, Ho, Wo)."""
    c_out, c_in, kh, kw = weights.shape
    cols, ho, wo = _im2col(x_pad, kh, kw, stride)
    out = cols @ weights.reshape(c_out, -1).T
    b = x_pad.shape[0]
    return out.reshape(b, ho, wo, c_out).transpose(0, 3, 1, 2).copy()


def conv2d_backward_weights(x_pad: np.ndarray, dy: np.ndarray, kh: int, kw: int,
                            stride: int) -> np.ndarray:
    """Gradient w.r.t. weights; dy is (B, C_out, Ho, Wo)."""
    b, c_out, ho, wo = dy.shape
    cols, _, _ = _im2col(x_pad, kh, kw, stride)
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(b * ho * wo, c_out)
    dw = dy_mat.T @ cols
    c_in = x_pad.shape[1]
    return dw.reshape(c_out, c_in, kh, kw)


def conv2d_backward_data(dy: np.ndarray, weights: np.ndarray, pad_shape: tuple,
                         stride: int) -> np.ndarray:
    """Gradient w.r.t. the padded input (col2im scatter-add)."""
    b, c_out, ho, wo = dy.shape
    c_out2, c_in, kh, kw = weights.shape
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(b * ho * wo, c_out)
    dcols = dy_mat @ weights.reshape(c_out, -1)  # (B*Ho*Wo, C_in*kh*kw)
    dcols = dcols.reshape(b, ho, wo, c_in, kh, kw)
    dx_pad = np.zeros(pad_shape, dtype=np.float64)
    for ki in range(kh):
        for kj in range(kw):
            dx_pad[:, :, ki:ki + ho * stride:stride, kj:kj + wo * stride:stride] += (
                dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    return dx_pad
