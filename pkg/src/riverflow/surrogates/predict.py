"""Higher-level prediction modes: segments, ensembles, pooled evaluation.

Segment prediction tiles a local model over a stretch of river either
densely (every stride-1 window, node values averaged over the windows that
contain them) or disjointly (non-overlapping tiles, the final one
right-aligned). Ensemble prediction propagates a bathymetry distribution
through a trained model draw by draw with derived per-draw seeds.
"""

from __future__ import annotations

import numpy as np

from ..dataset import SampleSet
from ..geostat import LowRankGaussian, sample_field
from ..grid import BoundaryCondition, ScalarField
from ..seeding import derive_seed
from .models import SurrogateModel
from .windows import window_starts, window_vector


def predict_segment(model: SurrogateModel, bathy: ScalarField, bc: BoundaryCondition,
                    start_d: int, length: int, strategy: str = "dense") -> np.ndarray:
    """Predicted target over ``length`` sections starting at ``start_d``.

    Returns an (n_across, length) array.
    """
    if model.scope != "local":
        raise ValueError("segment prediction needs a local model")
    span = model.window_span
    if length < span:
        raise ValueError(f"segment length {length} is below the window span {span}")
    if start_d < 0 or start_d + length > bathy.grid.n_along:
        raise ValueError("segment does not fit inside the grid")
    if strategy not in ("dense", "disjoint"):
        raise ValueError(f"unknown strategy {strategy!r}")
    ny = bathy.grid.n_across

    if strategy == "dense":
        starts = start_d + window_starts(length, span)
    else:
        starts = list(range(start_d, start_d + length - span + 1, span))
        last = start_d + length - span
        if starts[-1] != last:
            starts.append(last)
        starts = np.asarray(starts)

    wins = np.stack([window_vector(bathy.values, int(d), span) for d in starts])
    preds = model.predict_windows(wins, bc, starts.astype(np.float64))

    out = np.zeros((ny, length))
    hits = np.zeros(length)
    for row, d in zip(preds, starts):
        lo = int(d) - start_d
        out[:, lo:lo + span] += row.reshape(span, ny).T
        hits[lo:lo + span] += 1.0
    if strategy == "disjoint":
        # overwrite overlap of the right-aligned final tile instead of averaging
        out[:] = 0.0
        hits[:] = 1.0
        for row, d in zip(preds, starts):
            lo = int(d) - start_d
            out[:, lo:lo + span] = row.reshape(span, ny).T
        return out
    return out / hits[None, :]


def predict_posterior_ensemble(model: SurrogateModel, posterior: LowRankGaussian,
                               bc: BoundaryCondition, n: int, seed: int,
                               forward=None) -> tuple[ScalarField, ScalarField]:
    """Pointwise mean and (population) standard deviation of predictions
    over ``n`` seeded posterior bathymetry draws.

    ``forward`` overrides the predictor (signature ``(bathy, bc) ->
    ScalarField``); the default is the trained model's global prediction.
    """
    if n < 2:
        raise ValueError("need n >= 2 draws for a standard deviation")
    if forward is None:
        forward = lambda b, c: model.predict(b, c)
    grid = posterior.mean.grid
    stack = np.empty((n, grid.n_across, grid.n_along))
    for i in range(n):
        draw = sample_field(posterior, derive_seed(seed, "ensemble", i))
        stack[i] = forward(draw, bc).values
    mean = stack.mean(axis=0)
    # two-pass variance (population divisor): exactly zero for identical draws
    std = np.sqrt(np.mean((stack - mean) ** 2, axis=0))
    return ScalarField(grid, mean), ScalarField(grid, std)


def pooled_rmse(model: SurrogateModel, samples: SampleSet, tag: str) -> float:
    """RMSE pooled over every node of every sample in a split.

    The denominator is the total number of evaluated points (field
    dimension times sample count), matching the error convention used for
    the solver comparisons.
    """
    x, bc, y = samples.arrays(tag, model.target)
    pred = model.predict_vectors(x, bc)
    diff = pred - y
    return float(np.sqrt(np.mean(diff * diff)))


def per_sample_rmse(model: SurrogateModel, samples: SampleSet, tag: str):
    """(rmse_i, q_i) per sample; used by the discharge-binned statistics."""
    x, bc, y = samples.arrays(tag, model.target)
    pred = model.predict_vectors(x, bc)
    rmse = np.sqrt(np.mean((pred - y) ** 2, axis=1))
    return rmse, bc[:, 0]


def local_pooled_rmse(model: SurrogateModel, samples: SampleSet, tag: str,
                      strategy: str = "dense") -> float:
    """Pooled RMSE of a local model tiled over whole domains."""
    recs = samples.split(tag)
    grid = samples.grid
    total, count = 0.0, 0
    for rec in recs:
        bathy = samples.load_bathy(rec)
        truth = samples.load_target(rec, model.target).values
        pred = predict_segment(model, bathy, rec.bc(), 0, grid.n_along, strategy)
        total += float(np.sum((pred - truth) ** 2))
        count += truth.size
    return float(np.sqrt(total / count))
