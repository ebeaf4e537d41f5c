"""Gauge-record ingestion and boundary-condition sampling.

Boundary conditions are generated by drawing a uniform discharge and
reading the free-surface elevation off a single-valued quadratic rating
curve fitted to (Q, z_f) gauge pairs. No hysteresis is modeled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from importlib import resources

import numpy as np

from .grid import BoundaryCondition
from .seeding import make_rng

REQUIRED_COLUMNS = ("timestamp", "discharge_m3s", "stage_m")

CFS_TO_M3S = 0.3048**3
FT_TO_M = 0.3048


class GaugeFormatError(ValueError):
    """Raised for malformed or contract-violating gauge files."""


@dataclass(frozen=True)
class GaugeRecord:
    timestamp: datetime
    discharge_q: float  # [m3/s]
    stage_zf: float  # [m]


@dataclass(frozen=True)
class StageDischargeCurve:
    """Single-valued rating curve z_f(Q) = a Q^2 + b Q + c on [q_min, q_max]."""

    a: float
    b: float
    c: float
    q_min: float
    q_max: float
    residual_rms: float = 0.0

    def __post_init__(self):
        if not self.q_min < self.q_max:
            raise ValueError("q_min must be below q_max")
        qs = np.linspace(self.q_min, self.q_max, 32)
        if not np.all(np.isfinite(self.stage(qs))):
            raise ValueError("curve is non-finite on its discharge range")

    def stage(self, q):
        q = np.asarray(q, dtype=np.float64)
        return self.a * q * q + self.b * q + self.c


def ingest_gauge_csv(path, units: str = "si") -> list[GaugeRecord]:
    """Parse a gauge CSV with header ``timestamp,discharge_m3s,stage_m``.

    With ``units="us"`` the numeric columns are interpreted as ft3/s and ft
    and converted on ingest. Records must be strictly increasing in time
    with positive discharge.
    """
    if units not in ("si", "us"):
        raise ValueError(f"unknown units {units!r}")
    qf = CFS_TO_M3S if units == "us" else 1.0
    zf = FT_TO_M if units == "us" else 1.0
    records: list[GaugeRecord] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = tuple(reader.fieldnames or ())
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise GaugeFormatError(f"missing column(s): {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row["timestamp"].strip())
                q = float(row["discharge_m3s"]) * qf
                z = float(row["stage_m"]) * zf
            except (TypeError, ValueError) as exc:
                raise GaugeFormatError(f"line {lineno}: unparsable record") from exc
            if q <= 0:
                raise GaugeFormatError(f"line {lineno}: non-positive discharge {q}")
            if records and ts <= records[-1].timestamp:
                raise GaugeFormatError(
                    f"line {lineno}: timestamps must strictly increase"
                )
            records.append(GaugeRecord(ts, q, z))
    return records


def fit_stage_discharge(records) -> StageDischargeCurve:
    """Least-squares quadratic fit of stage against discharge."""
    q = np.array([r.discharge_q for r in records], dtype=np.float64)
    z = np.array([r.stage_zf for r in records], dtype=np.float64)
    if len(np.unique(q)) < 3:
        raise ValueError("need at least 3 distinct discharge values")
    design = np.column_stack([q * q, q, np.ones_like(q)])
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    resid = z - design @ coef
    return StageDischargeCurve(
        a=float(coef[0]),
        b=float(coef[1]),
        c=float(coef[2]),
        q_min=float(q.min()),
        q_max=float(q.max()),
        residual_rms=float(np.sqrt(np.mean(resid * resid))),
    )


def sample_bc(curve: StageDischargeCurve, n: int, seed: int) -> list[BoundaryCondition]:
    """Draw n boundary conditions: Q ~ U(q_min, q_max), z_f from the curve."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    qs = rng.uniform(curve.q_min, curve.q_max, size=n)
    return [BoundaryCondition(float(q), float(curve.stage(q))) for q in qs]


def save_curve(curve: StageDischargeCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write("rating_curve v1\n")
        for key in ("a", "b", "c", "q_min", "q_max", "residual_rms"):
            fh.write(f"{key} = {getattr(curve, key)!r}\n")


def load_curve(path) -> StageDischargeCurve:
    kv = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "rating_curve v1":
            raise ValueError(f"not a rating-curve file: {header!r}")
        for line in fh:
            if "=" in line:
                key, val = line.split("=", 1)
                kv[key.strip()] = float(val)
    return StageDischargeCurve(**kv)


def default_gauge_path():
    """Path of the shipped synthetic gauge record (Q in [85, 840] m3/s)."""
    return resources.files("riverflow.data").joinpath("synthetic_gauge.csv")


def default_curve() -> StageDischargeCurve:
    """Rating curve fitted to the shipped synthetic gauge record."""
    with resources.as_file(default_gauge_path()) as p:
        return fit_stage_discharge(ingest_gauge_csv(p))
