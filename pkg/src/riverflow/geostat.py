"""Separable Gaussian covariances, low-rank field sampling, and augmentation.

The riverbed covariance is a squared-exponential kernel that factors into
independent along-channel and across-channel parts, so the full covariance
is a Kronecker product of two small 1D matrices. Truncated
eigendecompositions of the 1D factors give a low-rank square root without
ever assembling the dense node-by-node covariance.

Across-river nonstationarity (small variability near the banks, full
variability mid-channel) is applied by scaling factor rows with a weight
profile, and training bathymetries are produced by adding an independent
weighted kernel sample on top of each posterior sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GRID_MAGIC, RiverGrid, ScalarField, make_bend_grid
from .seeding import make_rng

LRG_MAGIC = "RFG1"

# eigenvalues below this fraction of the largest are symmetrization noise
EIG_TRUNC_REL = 1e-10


@dataclass(frozen=True)
class SeparableKernel:
    """Squared-exponential kernel beta^2 exp(-dx^2/l_x^2 - dy^2/l_y^2)."""

    beta: float = 1.2  # amplitude [m]
    l_x: float = 115.0  # along-channel length scale [m]
    l_y: float = 29.0  # across-channel length scale [m]

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.l_x <= 0 or self.l_y <= 0:
            raise ValueError("length scales must be positive")


def kernel_eval(k: SeparableKernel, dx: float, dy: float) -> float:
    """Covariance at lag (dx, dy) [m^2]."""
    return float(k.beta**2 * np.exp(-(dx * dx) / k.l_x**2 - (dy * dy) / k.l_y**2))


@dataclass(frozen=True)
class WeightProfile:
    """Across-river standard-deviation weights, 1 mid-channel, small at banks."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be 1D")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError("weights must lie in [0, 1]")
        if np.max(np.abs(w - w[::-1])) > 1e-12:
            raise ValueError("weights must be symmetric about mid-channel")
        n = w.size
        if n % 2 == 1 and abs(w[n // 2] - 1.0) > 1e-12:
            raise ValueError("mid-channel weight must equal 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def sine_weight_profile(n_across: int, w_min: float = 0.15, power: float = 1.0) -> WeightProfile:
    """w(i) = w_min + (1 - w_min) sin(pi i / (n-1))^p, near-zero at banks."""
    i = np.arange(n_across, dtype=np.float64)
    w = w_min + (1.0 - w_min) * np.sin(np.pi * i / (n_across - 1)) ** power
    # guard symmetry and the exact mid-channel value against rounding
    w = 0.5 * (w + w[::-1])
    if n_across % 2 == 1:
        w[n_across // 2] = 1.0
    return WeightProfile(np.clip(w, 0.0, 1.0))


@dataclass(frozen=True)
class LowRankGaussian:
    """Gaussian field distribution: samples = mean + factor @ xi, xi ~ N(0, I_r).

    Factor rows follow the canonical node order (across index fastest), so
    row ``j * n_across + i`` belongs to node (i, j).
    """

    mean: ScalarField
    factor: np.ndarray = field(repr=False)  # (n_nodes, r)

    def __post_init__(self):
        f = np.array(self.factor, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] != self.mean.grid.n_nodes:
            raise ValueError("factor must be (n_nodes, r)")
        if not np.all(np.isfinite(f)):
            raise ValueError("factor contains non-finite entries")
        f.setflags(write=False)
        object.__setattr__(self, "factor", f)

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    def pointwise_std(self) -> np.ndarray:
        """Marginal standard deviation per node, in grid layout."""
        var = np.sum(self.factor * self.factor, axis=1)
        return self.mean.grid.from_vector(np.sqrt(var))


def _axis_covariance(n: int, spacing: float, length_scale: float) -> np.ndarray:
    d = (np.arange(n, dtype=np.float64) * spacing)[:, None]
    lag = d - d.T
    c = np.exp(-(lag * lag) / length_scale**2)
    return 0.5 * (c + c.T)


def _truncated_eig(c: np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(c)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    lam_max = max(vals[0], 0.0)
    if lam_max <= 0:
        raise np.linalg.LinAlgError("axis covariance is not positive semidefinite")
    floor = EIG_TRUNC_REL * lam_max
    if vals[-1] < -floor:
        raise np.linalg.LinAlgError("axis covariance is indefinite beyond tolerance")
    keep = min(rank, int(np.sum(vals > floor)))
    return np.clip(vals[:keep], 0.0, None), vecs[:, :keep]


def build_separable_factors(
    k: SeparableKernel,
    grid: RiverGrid,
    rank_x: int = 60,
    rank_y: int = 20,
    max_rank: int = 100,
) -> LowRankGaussian:
    """Zero-mean low-rank Gaussian with the separable kernel covariance.

    Eigendecomposes the 1D along- and across-channel covariances, forms
    Kronecker pairs of eigenvectors scaled by sqrt of the eigenvalue
    product (times beta), and keeps the ``max_rank`` pairs with the largest
    combined eigenvalues.
    """
    if rank_x > grid.n_along or rank_y > grid.n_across:
        raise ValueError("ranks cannot exceed the axis dimensions")
    zero = ScalarField(grid, np.zeros((grid.n_across, grid.n_along)))
    if k.beta == 0.0:
        return LowRankGaussian(zero, np.zeros((grid.n_nodes, 1)))
    cx = _axis_covariance(grid.n_along, grid.spacing_m, k.l_x)
    cy = _axis_covariance(grid.n_across, grid.spacing_m, k.l_y)
    lx, vx = _truncated_eig(cx, rank_x)
    ly, vy = _truncated_eig(cy, rank_y)
    prod = np.outer(lx, ly)  # (rank_x, rank_y) combined eigenvalues
    order = np.argsort(prod, axis=None)[::-1]
    keep = order[: min(max_rank, prod.size)]
    cols = np.empty((grid.n_nodes, keep.size))
    for out, idx in enumerate(keep):
        a, b = np.unravel_index(idx, prod.shape)
        scale = k.beta * np.sqrt(prod[a, b])
        cols[:, out] = scale * np.kron(vx[:, a], vy[:, b])
    return LowRankGaussian(zero, cols)


def apply_cross_river_weighting(g: LowRankGaussian, w: WeightProfile) -> LowRankGaussian:
    """Scale each factor row by the weight of its across-river index."""
    n_across = g.mean.grid.n_across
    if w.weights.size != n_across:
        raise ValueError("weight profile does not match grid width")
    row_w = np.tile(w.weights, g.mean.grid.n_along)
    return LowRankGaussian(g.mean, g.factor * row_w[:, None])


def sample_field(g: LowRankGaussian, seed: int) -> ScalarField:
    """Draw one field: mean + factor @ xi with seeded standard-normal xi."""
    rng = make_rng(seed)
    xi = rng.standard_normal(g.rank)
    vec = g.mean.to_vector() + g.factor @ xi
    return ScalarField.from_vector(g.mean.grid, vec)


def augment_posterior(
    posterior: LowRankGaussian,
    k: SeparableKernel,
    w: WeightProfile,
    n: int,
    seed: int,
    rank_x: int = 60,
    rank_y: int = 20,
    max_rank: int = 100,
) -> list[ScalarField]:
    """Broaden the posterior: each output adds an independent weighted
    kernel-field draw to a fresh posterior draw."""
    grid = posterior.mean.grid
    kernel_field = apply_cross_river_weighting(
        build_separable_factors(k, grid, rank_x, rank_y, max_rank), w
    )
    out = []
    rng = make_rng(seed)
    mean_vec = posterior.mean.to_vector()
    for _ in range(n):
        xi_post = rng.standard_normal(posterior.rank)
        xi_kern = rng.standard_normal(kernel_field.rank)
        vec = mean_vec + posterior.factor @ xi_post + kernel_field.factor @ xi_kern
        out.append(ScalarField.from_vector(grid, vec))
    return out


def save_low_rank(g: LowRankGaussian, path, dtype: str = "float64") -> None:
    """Header plus mean payload plus factor payload (RFS1 conventions)."""
    dt = {"float32": "<f4", "float64": "<f8"}[dtype]
    grid = g.mean.grid
    lines = [
        LRG_MAGIC,
        f"n_across {grid.n_across}",
        f"n_along {grid.n_along}",
        f"spacing_m {float(grid.spacing_m)!r}",
        f"rank {g.rank}",
        f"dtype {dtype}",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(g.mean.values.ravel().astype(dt).tobytes())
        fh.write(g.factor.ravel().astype(dt).tobytes())


def load_low_rank(path, grid: RiverGrid | None = None) -> LowRankGaussian:
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", errors="replace").strip()
        if first != LRG_MAGIC:
            raise ValueError(f"bad magic {first!r}, expected {LRG_MAGIC!r} (RFS1 is {GRID_MAGIC!r})")
        meta = {}
        while True:
            line = fh.readline().decode("ascii", errors="replace").strip()
            if line == "end_header":
                break
            key, val = line.split(None, 1)
            meta[key] = val
        raw = fh.read()
    ny, nx, r = int(meta["n_across"]), int(meta["n_along"]), int(meta["rank"])
    dt = {"float32": "<f4", "float64": "<f8"}[meta["dtype"]]
    if grid is None:
        grid = make_bend_grid(ny, nx, float(meta["spacing_m"]))
    vals = np.frombuffer(raw, dtype=dt).astype(np.float64)
    n_nodes = ny * nx
    if vals.size != n_nodes + n_nodes * r:
        raise ValueError("payload size disagrees with header")
    mean = ScalarField(grid, vals[:n_nodes].reshape(ny, nx))
    factor = vals[n_nodes:].reshape(n_nodes, r)
    return LowRankGaussian(mean, factor)
