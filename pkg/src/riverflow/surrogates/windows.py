"""Windowed (local) dataset machinery.

The local solver sees fixed-size across-by-along windows of the river plus
the window's along-index distance from the inlet. A full profile of
``n_along`` sections yields ``n_along - span + 1`` stride-1 windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LocalWindow:
    across_span: int
    along_span: int
    distance_d: int

    def __post_init__(self):
        if self.across_span < 1 or self.along_span < 1 or self.distance_d < 0:
            raise ValueError("invalid window geometry")


def window_count(n_along: int, span: int, stride: int = 1) -> int:
    if span > n_along:
        raise ValueError("window span exceeds the grid")
    return (n_along - span) // stride + 1


def window_starts(n_along: int, span: int, stride: int = 1) -> np.ndarray:
    return np.arange(0, n_along - span + 1, stride)


def window_vector(values: np.ndarray, d: int, span: int) -> np.ndarray:
    """Canonical (across-fastest) vector of one window of a (ny, nx) field."""
    return values[:, d:d + span].T.reshape(-1)


def vector_to_window(vec: np.ndarray, n_across: int, span: int) -> np.ndarray:
    return vec.reshape(span, n_across).T


def expand_to_windows(fields: np.ndarray, n_across: int, n_along: int, span: int):
    """Expand stacked field vectors (n, ny*nx) into stride-1 window vectors.

    Returns (window_matrix (n*W, ny*span), distances (n*W,), sample_index
    (n*W,)) where W is the window count; windows of one sample are
    consecutive and ordered by distance.
    """
    n = fields.shape[0]
    starts = window_starts(n_along, span)
    w = starts.size
    grids = fields.reshape(n, n_along, n_across)  # canonical order restored
    out = np.empty((n * w, span * n_across))
    for k, d in enumerate(starts):
        block = grids[:, d:d + span, :].reshape(n, span * n_across)
        out[k::w] = block
    dists = np.tile(starts.astype(np.float64), n)
    sample_idx = np.repeat(np.arange(n), w)
    return out, dists, sample_idx
