"""Desk-scale steady forward model and synthetic observation generation.

The solver is a quasi-2D conveyance model: a water-surface elevation is
computed per cross section (either fixed at the downstream stage or by an
upstream-marching standard-step energy balance with Manning friction), and
the section discharge is distributed across wetted nodes proportionally to
h^(2/3), rescaled so the numerically integrated discharge equals Q exactly.
The velocity direction follows the local centerline tangent.

It is nonlinear in both bathymetry and boundary condition, conserves mass
by construction, and runs in milliseconds, which is what the surrogate
pipeline needs from its training-data generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BoundaryCondition, RiverGrid, ScalarField, VectorField, velocity_magnitude
from .seeding import make_rng

GRAVITY = 9.81


class SolverError(RuntimeError):
    """Raised when a steady solve cannot be completed."""


@dataclass(frozen=True)
class OracleConfig:
    manning_n: float = 0.03  # [s m^-1/3]
    h_min: float = 0.05  # wetted-depth clamp [m]
    mode: str = "fixed_stage"  # fixed_stage | backwater
    max_iter: int = 200
    tol: float = 1e-6  # stage tolerance [m]

    def __post_init__(self):
        if self.manning_n <= 0 or self.h_min <= 0 or self.tol <= 0:
            raise ValueError("manning_n, h_min, and tol must be positive")
        if self.mode not in ("fixed_stage", "backwater"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class ObservationSet:
    """Sparse noisy velocity observations at flat node indices.

    Node indices use the canonical across-fastest order.
    """

    locations: np.ndarray  # (k,) int
    east: np.ndarray  # (k,) [m/s]
    north: np.ndarray  # (k,) [m/s]
    noise_sigma: float  # [m/s]

    def __post_init__(self):
        loc = np.array(self.locations, dtype=np.int64)
        e = np.array(self.east, dtype=np.float64)
        n = np.array(self.north, dtype=np.float64)
        if loc.size < 1:
            raise ValueError("need at least one observation")
        if e.shape != loc.shape or n.shape != loc.shape:
            raise ValueError("component arrays must match locations")
        for arr in (loc, e, n):
            arr.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "east", e)
        object.__setattr__(self, "north", n)

    def stacked(self) -> np.ndarray:
        """Both components stacked [east; north] as a 2k vector."""
        return np.concatenate([self.east, self.north])


def _section_depths(bed: np.ndarray, surface: float, h_min: float) -> np.ndarray:
    """Clamped wetted depths for one cross section (0 on dry nodes)."""
    h = surface - bed
    wet = h > 0.0
    h = np.where(wet, np.maximum(h, h_min), 0.0)
    return h


def _section_hydraulics(bed: np.ndarray, surface: float, spacing: float, h_min: float):
    """(area, wetted width, hydraulic radius) for one section."""
    h = _section_depths(bed, surface, h_min)
    wet = h > 0.0
    area = float(np.sum(h) * spacing)
    width = float(np.sum(wet) * spacing)
    radius = area / width if width > 0 else 0.0
    return area, width, radius


def _friction_slope(q: float, area: float, radius: float, n: float) -> float:
    if area <= 0 or radius <= 0:
        return np.inf
    v = q / area
    return n * n * v * v / radius ** (4.0 / 3.0)


def _surface_profile(bathy: np.ndarray, bc: BoundaryCondition, grid: RiverGrid,
                     cfg: OracleConfig) -> np.ndarray:
    """Water-surface elevation per along-station."""
    ny, nx = bathy.shape
    surface = np.full(nx, bc.stage_zf, dtype=np.float64)
    if cfg.mode == "fixed_stage":
        return surface

    q, dy, g = bc.discharge_q, grid.spacing_m, GRAVITY
    step = grid.spacing_m  # along-station spacing equals the nominal spacing

    def energy_terms(j: int, w: float):
        area, _, radius = _section_hydraulics(bathy[:, j], w, dy, cfg.h_min)
        if area <= 0:
            return np.inf, np.inf
        v = q / area
        return w + v * v / (2 * g), _friction_slope(q, area, radius, cfg.manning_n)

    e_down, sf_down = energy_terms(nx - 1, surface[-1])
    if not np.isfinite(e_down):
        raise SolverError("downstream section is dry at the given stage")
    for j in range(nx - 2, -1, -1):
        bed = bathy[:, j]
        # smallest admissible stage: wets the three lowest nodes
        lo_wet = float(np.sort(bed)[min(2, bed.size - 1)]) + cfg.h_min
        hi = surface[j + 1] + 10.0

        def resid(w: float) -> float:
            e_up, sf_up = energy_terms(j, w)
            if not np.isfinite(e_up):
                return -np.inf  # stage too low: treat as below the root
            head_loss = step * 0.5 * (sf_up + sf_down)
            return e_up - e_down - head_loss

        # start just below the downstream surface to stay on the subcritical
        # branch; widen to the wetting limit only if needed
        lo = max(lo_wet, surface[j + 1] - 0.5)
        f_lo, f_hi = resid(lo), resid(hi)
        if f_lo > 0:
            lo, f_lo = lo_wet, resid(lo_wet)
        if not f_lo <= 0 <= f_hi:
            raise SolverError(f"backwater step at section {j} has no bracketed root")
        w_lo, w_hi = lo, hi
        it = 0
        while w_hi - w_lo > cfg.tol:
            it += 1
            if it > cfg.max_iter:
                raise SolverError(f"backwater bisection did not converge at section {j}")
            mid = 0.5 * (w_lo + w_hi)
            f_mid = resid(mid)
            if f_mid <= 0:
                w_lo = mid
            else:
                w_hi = mid
        surface[j] = 0.5 * (w_lo + w_hi)
        e_down, sf_down = energy_terms(j, surface[j])
    return surface


def solve_steady(
    bathy: ScalarField, bc: BoundaryCondition, cfg: OracleConfig | None = None
) -> tuple[VectorField, ScalarField]:
    """Steady velocity and depth fields for one bathymetry and BC.

    Raises :class:`SolverError` if any cross section wets fewer than three
    nodes or the backwater march fails to converge.
    """
    cfg = cfg or OracleConfig()
    grid = bathy.grid
    bed = bathy.values
    surface = _surface_profile(bed, bc, grid, cfg)

    depth = np.zeros_like(bed)
    speed = np.zeros_like(bed)
    dy = grid.spacing_m
    for j in range(grid.n_along):
        h = _section_depths(bed[:, j], surface[j], cfg.h_min)
        wet = h > 0.0
        if int(np.sum(wet)) < 3:
            raise SolverError(f"cross section {j} wets fewer than 3 nodes")
        conveyance = np.where(wet, h ** (5.0 / 3.0), 0.0)
        scale = bc.discharge_q / (dy * float(np.sum(conveyance)))
        depth[:, j] = h
        speed[:, j] = np.where(wet, scale * h ** (2.0 / 3.0), 0.0)

    tang = grid.tangents()
    east = speed * tang[:, 0][None, :]
    north = speed * tang[:, 1][None, :]
    return VectorField(grid, east, north), ScalarField(grid, depth)


def section_discharges(v: VectorField, depth: ScalarField) -> np.ndarray:
    """Numerically integrated discharge per cross section [m3/s].

    Integrates speed times depth across each section; independent of the
    construction inside :func:`solve_steady`.
    """
    speed = np.hypot(v.easting, v.northing)
    return np.sum(speed * depth.values, axis=0) * v.grid.spacing_m


def make_observations(
    v: VectorField, k: int, noise_fraction: float, seed: int
) -> ObservationSet:
    """Sample k nodes without replacement and add component-wise noise.

    The noise standard deviation is ``noise_fraction`` times the largest
    simulated speed.
    """
    grid = v.grid
    if k > grid.n_nodes:
        raise ValueError("k exceeds node count")
    if noise_fraction < 0:
        raise ValueError("noise_fraction must be non-negative")
    rng = make_rng(seed)
    locs = np.sort(rng.choice(grid.n_nodes, size=k, replace=False))
    e = grid.to_vector(v.easting)[locs]
    n = grid.to_vector(v.northing)[locs]
    sigma = noise_fraction * float(np.max(velocity_magnitude(v).values))
    if sigma > 0:
        e = e + rng.normal(0.0, sigma, size=k)
        n = n + rng.normal(0.0, sigma, size=k)
    return ObservationSet(locs, e, n, noise_sigma=sigma)


def make_synthetic_truth(grid: RiverGrid, bank_elev: float = 29.0,
                         max_depth: float = 4.0, slope: float = 1e-3,
                         seed: int = 7) -> ScalarField:
    """Reference riverbed used when no survey data is available.

    Parabolic cross sections whose thalweg drifts toward the outer bank
    through the bend, a mild downstream bed slope, and a few smooth
    seeded undulations along the channel.
    """
    ny, nx = grid.n_across, grid.n_along
    i = np.arange(ny, dtype=np.float64)[:, None]
    j = np.arange(nx, dtype=np.float64)[None, :]
    center = (ny - 1) / 2.0 + 0.18 * (ny - 1) * np.sin(np.pi * j / (nx - 1))
    half = (ny - 1) / 2.0
    shape = 1.0 - ((i - center) / half) ** 2
    rng = make_rng(seed)
    wobble = np.zeros(nx)
    for mode in range(1, 4):
        wobble += float(rng.normal(0, 0.25)) * np.sin(
            np.pi * mode * j[0] / (nx - 1) + float(rng.uniform(0, np.pi))
        )
    depth = (max_depth + wobble[None, :]) * np.clip(shape, 0.0, None)
    bed = bank_elev - depth - slope * (nx - 1 - j) * grid.spacing_m
    return ScalarField(grid, bed)
