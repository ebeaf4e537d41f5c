"""Structured river grid, fields on it, and field arithmetic.

The domain is a curvilinear channel discretized as an ``n_across x n_along``
node lattice. Geometry is carried by a centerline polyline plus per-station
across-channel unit vectors; node (i, j) sits at
``centerline[j] + across_axis[j] * (i - (n_across-1)/2) * spacing_m``.

Canonical node ordering for any vectorized quantity is row-major with the
across index fastest: flat index ``k = j * n_across + i``. This fixes the
Kronecker ordering used by the covariance factorization in :mod:`geostat`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GRID_MAGIC = "RFS1"

_KINDS = ("scalar", "vector")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


class FieldFormatError(ValueError):
    """Raised for malformed field files or shape/finiteness violations."""


def _unit_rows(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


@dataclass(frozen=True)
class RiverGrid:
    """Structured Ny x Nx river lattice in a local planar frame."""

    n_across: int
    n_along: int
    spacing_m: float
    centerline: np.ndarray  # (n_along, 2) [m]
    across_axis: np.ndarray  # (n_along, 2), unit vectors

    def __post_init__(self):
        if self.n_across < 1 or self.n_along < 1:
            raise ValueError("grid dimensions must be positive")
        if self.spacing_m <= 0:
            raise ValueError("spacing_m must be positive")
        cl = np.asarray(self.centerline, dtype=np.float64)
        ax = np.asarray(self.across_axis, dtype=np.float64)
        if cl.shape != (self.n_along, 2) or ax.shape != (self.n_along, 2):
            raise ValueError("centerline/across_axis shape must be (n_along, 2)")
        seg = np.linalg.norm(np.diff(cl, axis=0), axis=1)
        if self.n_along > 1 and np.any(seg <= 0):
            raise ValueError("centerline points must strictly increase in arc length")
        if np.max(np.abs(np.linalg.norm(ax, axis=1) - 1.0)) > 1e-12:
            raise ValueError("across_axis vectors must have unit norm")
        cl.setflags(write=False)
        ax.setflags(write=False)
        object.__setattr__(self, "centerline", cl)
        object.__setattr__(self, "across_axis", ax)

    @property
    def n_nodes(self) -> int:
        return self.n_across * self.n_along

    def tangents(self) -> np.ndarray:
        """Unit centerline tangents per along-station (central differences)."""
        cl = self.centerline
        t = np.empty_like(cl)
        if self.n_along == 1:
            t[:] = (1.0, 0.0)
            return t
        t[1:-1] = cl[2:] - cl[:-2]
        t[0] = cl[1] - cl[0]
        t[-1] = cl[-1] - cl[-2]
        return _unit_rows(t)

    def node_positions(self) -> np.ndarray:
        """(n_across, n_along, 2) node coordinates."""
        off = (np.arange(self.n_across) - (self.n_across - 1) / 2.0) * self.spacing_m
        return self.centerline[None, :, :] + off[:, None, None] * self.across_axis[None, :, :]

    def along_coord(self) -> np.ndarray:
        """Arc-length distance of each along-station from the inlet [m]."""
        seg = np.linalg.norm(np.diff(self.centerline, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def compatible(self, other: "RiverGrid") -> bool:
        return (
            self.n_across == other.n_across
            and self.n_along == other.n_along
            and self.spacing_m == other.spacing_m
        )

    # canonical (across-fastest) vectorization
    def to_vector(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).T.reshape(-1)

    def from_vector(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec).reshape(self.n_along, self.n_across).T


def make_bend_grid(
    n_across: int = 41,
    n_along: int = 64,
    spacing_m: float = 2.4,
    bend_deg: float = 60.0,
) -> RiverGrid:
    """Default synthetic curved-channel grid with a single smooth bend.

    The heading swings smoothly by ``bend_deg`` over the reach, which gives a
    planform similar to a natural meander limb. Arc-length spacing between
    centerline stations equals ``spacing_m``.
    """
    s = np.arange(n_along, dtype=np.float64) * spacing_m
    total = max(s[-1], spacing_m)
    theta = np.deg2rad(bend_deg) * 0.5 * (1.0 - np.cos(np.pi * s / total))
    # integrate heading with midpoint rule so station spacing stays exact
    cl = np.zeros((n_along, 2))
    for j in range(1, n_along):
        mid = 0.5 * (theta[j - 1] + theta[j])
        cl[j] = cl[j - 1] + spacing_m * np.array([np.cos(mid), -np.sin(mid)])
    return grid_from_centerline(cl, n_across, spacing_m)


def _validated_values(grid: RiverGrid, values: np.ndarray, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != (grid.n_across, grid.n_along):
        raise ValueError(
            f"{what} shape {arr.shape} does not match grid "
            f"({grid.n_across}, {grid.n_along})"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Scalar nodal field (bathymetry elevation, depth, speed, ...)."""

    grid: RiverGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _validated_values(self.grid, self.values, "values"))

    def to_vector(self) -> np.ndarray:
        return self.grid.to_vector(self.values)

    @staticmethod
    def from_vector(grid: RiverGrid, vec: np.ndarray) -> "ScalarField":
        return ScalarField(grid, grid.from_vector(vec))


@dataclass(frozen=True)
class VectorField:
    """Velocity field with easting/northing components [m/s]."""

    grid: RiverGrid
    easting: np.ndarray = field(repr=False)
    northing: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "easting", _validated_values(self.grid, self.easting, "easting"))
        object.__setattr__(self, "northing", _validated_values(self.grid, self.northing, "northing"))


@dataclass(frozen=True)
class BoundaryCondition:
    """Steady boundary condition: discharge Q [m3/s] and stage z_f [m]."""

    discharge_q: float
    stage_zf: float

    def __post_init__(self):
        if not np.isfinite(self.discharge_q) or self.discharge_q <= 0:
            raise ValueError("discharge_q must be positive and finite")
        if not np.isfinite(self.stage_zf):
            raise ValueError("stage_zf must be finite")


def field_rmse(a, b) -> float:
    """Root-mean-square pointwise difference over all grid nodes."""
    if not a.grid.compatible(b.grid):
        raise ValueError("fields live on incompatible grids")
    if isinstance(a, VectorField) or isinstance(b, VectorField):
        if not (isinstance(a, VectorField) and isinstance(b, VectorField)):
            raise ValueError("cannot mix scalar and vector fields")
        d = np.concatenate(
            [(a.easting - b.easting).ravel(), (a.northing - b.northing).ravel()]
        )
    else:
        d = (a.values - b.values).ravel()
    return float(np.sqrt(np.mean(d * d)))


def velocity_magnitude(v: VectorField) -> ScalarField:
    """Pointwise speed sqrt(easting^2 + northing^2)."""
    return ScalarField(v.grid, np.hypot(v.easting, v.northing))


# ---------------------------------------------------------------------------
# field file format: text header + raw little-endian payload
# ---------------------------------------------------------------------------

def save_field(fld, path, dtype: str = "float32", name: str = "") -> None:
    """Write a field to ``path``.

    Header lines: magic, n_across, n_along, spacing_m, dtype, kind, optional
    name, then ``end_header``; payload is row-major little-endian values
    (vector fields store the easting block then the northing block).
    """
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    kind = "vector" if isinstance(fld, VectorField) else "scalar"
    g = fld.grid
    lines = [
        GRID_MAGIC,
        f"n_across {g.n_across}",
        f"n_along {g.n_along}",
        f"spacing_m {float(g.spacing_m)!r}",
        f"dtype {dtype}",
        f"kind {kind}",
    ]
    if name:
        lines.append(f"name {name}")
    lines.append("end_header")
    np_dtype = np.dtype(_DTYPES[dtype])
    if kind == "vector":
        payload = np.concatenate([fld.easting.ravel(), fld.northing.ravel()])
    else:
        payload = fld.values.ravel()
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(payload.astype(np_dtype).tobytes())


def _read_header(fh) -> dict:
    first = fh.readline().decode("ascii", errors="replace").strip()
    if first != GRID_MAGIC:
        raise FieldFormatError(f"bad magic {first!r}, expected {GRID_MAGIC!r}")
    meta = {}
    while True:
        line = fh.readline()
        if not line:
            raise FieldFormatError("truncated header")
        line = line.decode("ascii", errors="replace").strip()
        if line == "end_header":
            break
        try:
            key, val = line.split(None, 1)
        except ValueError as exc:
            raise FieldFormatError(f"malformed header line {line!r}") from exc
        meta[key] = val
    for key in ("n_across", "n_along", "spacing_m", "dtype", "kind"):
        if key not in meta:
            raise FieldFormatError(f"header missing {key!r}")
    return meta


def load_field(path, grid: RiverGrid | None = None):
    """Read a field written by :func:`save_field`.

    If ``grid`` is omitted a default bend grid with the header's dimensions
    is constructed. The payload must match the declared shape and be finite.
    """
    with open(path, "rb") as fh:
        meta = _read_header(fh)
        raw = fh.read()
    try:
        ny, nx = int(meta["n_across"]), int(meta["n_along"])
        spacing = float(meta["spacing_m"])
    except ValueError as exc:
        raise FieldFormatError("non-numeric header fields") from exc
    if meta["dtype"] not in _DTYPES:
        raise FieldFormatError(f"unknown dtype {meta['dtype']!r}")
    if meta["kind"] not in _KINDS:
        raise FieldFormatError(f"unknown kind {meta['kind']!r}")
    if grid is None:
        grid = make_bend_grid(ny, nx, spacing)
    elif grid.n_across != ny or grid.n_along != nx or grid.spacing_m != spacing:
        raise FieldFormatError("header disagrees with supplied grid")
    np_dtype = np.dtype(_DTYPES[meta["dtype"]])
    n_planes = 2 if meta["kind"] == "vector" else 1
    expected = ny * nx * n_planes * np_dtype.itemsize
    if len(raw) != expected:
        raise FieldFormatError(
            f"payload has {len(raw)} bytes, header declares {expected}"
        )
    vals = np.frombuffer(raw, dtype=np_dtype).astype(np.float64)
    if not np.all(np.isfinite(vals)):
        raise FieldFormatError("payload contains non-finite values")
    if meta["kind"] == "vector":
        e, n = vals[: ny * nx].reshape(ny, nx), vals[ny * nx:].reshape(ny, nx)
        return VectorField(grid, e, n)
    return ScalarField(grid, vals.reshape(ny, nx))


def save_centerline(grid: RiverGrid, path) -> None:
    """Grid geometry file: one ``x y`` centerline point per line."""
    with open(path, "w") as fh:
        fh.write(f"# n_across {grid.n_across} spacing_m {float(grid.spacing_m)!r}\n")
        for x, y in grid.centerline:
            fh.write(f"{float(x)!r} {float(y)!r}\n")


def load_centerline(path) -> tuple[np.ndarray, int | None, float | None]:
    """Read a centerline file; returns (points, n_across, spacing) metadata."""
    pts, n_across, spacing = [], None, None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            toks = line[1:].split()
            if "n_across" in toks:
                n_across = int(toks[toks.index("n_across") + 1])
            if "spacing_m" in toks:
                spacing = float(toks[toks.index("spacing_m") + 1])
            continue
        x, y = line.replace(",", " ").split()
        pts.append((float(x), float(y)))
    return np.asarray(pts, dtype=np.float64), n_across, spacing


def grid_from_centerline(points: np.ndarray, n_across: int, spacing_m: float) -> RiverGrid:
    """Build a grid from centerline points; across axes are tangent normals."""
    pts = np.asarray(points, dtype=np.float64)
    n_along = pts.shape[0]
    t = np.empty_like(pts)
    t[1:-1] = pts[2:] - pts[:-2]
    t[0] = pts[1] - pts[0]
    t[-1] = pts[-1] - pts[-2]
    t = _unit_rows(t)
    across = np.column_stack([-t[:, 1], t[:, 0]])
    return RiverGrid(n_across, n_along, spacing_m, pts, across)
