"""Evaluation procedures: latent sensitivity, partial-measurement error,
and discharge-binned error statistics.

Sensitivity perturbs one latent component at a time by twice that
component's dataset standard deviation, re-evaluates outputs through the
latent-to-output map only, and reports the absolute change in pooled RMSE.
Partial-measurement evaluation replaces the bathymetry beyond the first S
measured cross sections with the posterior mean before predicting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SampleSet
from .grid import ScalarField
from .surrogates.models import SurrogateModel


@dataclass(frozen=True)
class LatentStats:
    tag: str
    sigmas: np.ndarray  # (L,) per-component standard deviation

    def __post_init__(self):
        s = np.array(self.sigmas, dtype=np.float64)
        if np.any(s < 0):
            raise ValueError("standard deviations must be non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)


@dataclass(frozen=True)
class SensitivityReport:
    tag: str
    delta_rmse: np.ndarray  # (L,) per perturbed component [m/s]
    baseline_rmse: float
    stats: LatentStats

    def __post_init__(self):
        d = np.array(self.delta_rmse, dtype=np.float64)
        if np.any(d < 0):
            raise ValueError("delta RMSE entries are absolute values")
        d.setflags(write=False)
        object.__setattr__(self, "delta_rmse", d)


@dataclass(frozen=True)
class BinStats:
    q_lo: float
    q_hi: float
    count: int
    q1: float = np.nan
    median: float = np.nan
    q3: float = np.nan
    whisker_lo: float = np.nan
    whisker_hi: float = np.nan
    outliers: tuple = ()


@dataclass(frozen=True)
class DischargeErrorBins:
    tag: str
    bins: tuple  # of BinStats


def latent_stats(model: SurrogateModel, samples: SampleSet, tag: str) -> LatentStats:
    recs = samples.split(tag)
    if len(recs) < 2:
        raise ValueError("need at least 2 datapoints for latent statistics")
    x, _, _ = samples.arrays(tag, model.target)
    z = model.encode_latent(x)
    return LatentStats(tag, z.std(axis=0))


def latent_sensitivity(model: SurrogateModel, samples: SampleSet, tag: str) -> SensitivityReport:
    """Absolute pooled-RMSE change per +2 sigma single-component perturbation.

    The perturbed outputs are produced by the latent-to-output map alone;
    the encoder (or projection) runs once for the baseline latents.
    """
    x, bc, y = samples.arrays(tag, model.target)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 datapoints")
    z = model.encode_latent(x)
    sigmas = z.std(axis=0)
    base_pred = model.decode_latent(z, bc)
    baseline = float(np.sqrt(np.mean((base_pred - y) ** 2)))
    deltas = np.empty(model.latent_dim)
    for comp in range(model.latent_dim):
        z_pert = z.copy()
        z_pert[:, comp] += 2.0 * sigmas[comp]
        pred = model.decode_latent(z_pert, bc)
        rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
        deltas[comp] = abs(rmse - baseline)
    return SensitivityReport(tag, deltas, baseline, LatentStats(tag, sigmas))


def partial_bathymetry_eval(model: SurrogateModel, samples: SampleSet,
                            posterior_mean: ScalarField, s_list,
                            tag: str = "test") -> dict[int, float]:
    """Pooled RMSE per measured-cross-section count S.

    The model input keeps the true bathymetry on the first S sections
    (counted from the inlet) and the posterior mean elsewhere; S equal to
    the section count reproduces the standard evaluation bit for bit.
    """
    grid = samples.grid
    n_along = grid.n_along
    mean_vec = posterior_mean.to_vector()
    x, bc, y = samples.arrays(tag, model.target)
    out = {}
    for s in sorted(set(int(s) for s in s_list)):
        if s < 0 or s > n_along:
            raise ValueError(f"S={s} outside [0, {n_along}]")
        if s == n_along:
            blended = x
        else:
            blended = np.tile(mean_vec, (x.shape[0], 1))
            # canonical order is across-fastest: the first S sections are
            # the first S * n_across vector entries
            cut = s * grid.n_across
            blended[:, :cut] = x[:, :cut]
        pred = model.predict_vectors(blended, bc)
        out[s] = float(np.sqrt(np.mean((pred - y) ** 2)))
    return out


def scaled_section_counts(n_along: int, reference=(10, 25, 50, 100, 150, 200,
                                                   250, 300, 350, 450),
                          reference_n_along: int = 501) -> list[int]:
    """Proportionally rescale the canonical measured-section ladder."""
    scaled = sorted({min(n_along, max(1, round(s * n_along / reference_n_along)))
                     for s in reference})
    return list(scaled)


def _quartiles(values: np.ndarray) -> tuple[float, float, float]:
    """Q1, median, Q3 by linear interpolation between order statistics."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size

    def at(p):
        pos = p * (n - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        return float(v[lo] * (1 - frac) + v[hi] * frac)

    return at(0.25), at(0.5), at(0.75)


def error_vs_discharge(errors: np.ndarray, discharges: np.ndarray,
                       q_min: float, q_max: float, n_bins: int = 5,
                       tag: str = "all") -> DischargeErrorBins:
    """Box statistics of per-sample errors over equal-width discharge bins.

    Outliers fall outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR]; whiskers are the
    extreme data inside that fence. Empty bins are reported, not errors.
    """
    errors = np.asarray(errors, dtype=np.float64)
    discharges = np.asarray(discharges, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("empty dataset")
    edges = np.linspace(q_min, q_max, n_bins + 1)
    bins = []
    for b in range(n_bins):
        lo, hi = edges[b], edges[b + 1]
        if b == n_bins - 1:
            mask = (discharges >= lo) & (discharges <= hi)
        else:
            mask = (discharges >= lo) & (discharges < hi)
        vals = errors[mask]
        if vals.size == 0:
            bins.append(BinStats(float(lo), float(hi), 0))
            continue
        q1, med, q3 = _quartiles(vals)
        iqr = q3 - q1
        fence_lo, fence_hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = vals[(vals >= fence_lo) & (vals <= fence_hi)]
        outliers = tuple(float(v) for v in np.sort(vals[(vals < fence_lo) | (vals > fence_hi)]))
        bins.append(BinStats(float(lo), float(hi), int(vals.size), q1, med, q3,
                             float(inside.min()), float(inside.max()), outliers))
    return DischargeErrorBins(tag, tuple(bins))
