"""Manifest-backed (bathymetry, BC, velocity) sample collections.

A dataset directory holds one RFS1 field file per stored quantity and a
line-delimited JSON manifest listing, for every sample, its file names,
boundary condition, split tag, and a content digest. Failed forward solves
are recorded in the manifest with their reason instead of being dropped.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import (
    BoundaryCondition,
    RiverGrid,
    ScalarField,
    VectorField,
    load_field,
    save_field,
    velocity_magnitude,
)
from .oracle import OracleConfig, SolverError, solve_steady
from .scenario import StageDischargeCurve
from .seeding import make_rng

MANIFEST_NAME = "manifest.jsonl"
SPLITS = ("train", "validation", "test")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class SampleRecord:
    index: int
    split: str
    q: float
    zf: float
    bathy_file: str
    velocity_file: str
    depth_file: str
    digest: str

    def bc(self) -> BoundaryCondition:
        return BoundaryCondition(self.q, self.zf)


class SampleSet:
    """Collection of solved samples rooted at a dataset directory."""

    def __init__(self, root, records, failures=None, grid: RiverGrid | None = None):
        self.root = Path(root)
        self.records: list[SampleRecord] = list(records)
        self.failures: list[dict] = list(failures or [])
        self._grid = grid

    def __len__(self) -> int:
        return len(self.records)

    @property
    def grid(self) -> RiverGrid:
        if self._grid is None:
            first = self.load_bathy(self.records[0])
            self._grid = first.grid
        return self._grid

    def split(self, tag: str) -> list[SampleRecord]:
        if tag == "all":
            return list(self.records)
        if tag not in SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        return [r for r in self.records if r.split == tag]

    def load_bathy(self, rec: SampleRecord) -> ScalarField:
        return load_field(self.root / rec.bathy_file, self._grid)

    def load_velocity(self, rec: SampleRecord) -> VectorField:
        return load_field(self.root / rec.velocity_file, self._grid)

    def load_target(self, rec: SampleRecord, target: str) -> ScalarField:
        v = self.load_velocity(rec)
        if target == "magnitude":
            return velocity_magnitude(v)
        if target == "easting":
            return ScalarField(v.grid, v.easting)
        if target == "northing":
            return ScalarField(v.grid, v.northing)
        raise ValueError(f"unknown target {target!r}")

    # --- stacked canonical-vector arrays for training ---------------------

    def arrays(self, tag: str, target: str):
        """(bathy (n, N), bc (n, 2), y (n, N)) canonical-order arrays."""
        recs = self.split(tag)
        if not recs:
            raise ValueError(f"split {tag!r} is empty")
        grid = self.grid
        x = np.empty((len(recs), grid.n_nodes))
        y = np.empty_like(x)
        bc = np.empty((len(recs), 2))
        for n, rec in enumerate(recs):
            x[n] = self.load_bathy(rec).to_vector()
            y[n] = self.load_target(rec, target).to_vector()
            bc[n] = (rec.q, rec.zf)
        return x, bc, y

    def save_manifest(self) -> str:
        lines = []
        for rec in self.records:
            lines.append(json.dumps({
                "index": rec.index, "status": "ok", "split": rec.split,
                "q": rec.q, "zf": rec.zf, "bathy": rec.bathy_file,
                "velocity": rec.velocity_file, "depth": rec.depth_file,
                "digest": rec.digest,
            }, sort_keys=True))
        for fail in self.failures:
            lines.append(json.dumps({"status": "failed", **fail}, sort_keys=True))
        text = "\n".join(lines) + "\n"
        (self.root / MANIFEST_NAME).write_text(text)
        return hashlib.sha256(text.encode()).hexdigest()

    @staticmethod
    def load(root, grid: RiverGrid | None = None) -> "SampleSet":
        root = Path(root)
        records, failures = [], []
        for line in (root / MANIFEST_NAME).read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("status") == "failed":
                failures.append({k: v for k, v in obj.items() if k != "status"})
                continue
            records.append(SampleRecord(
                index=obj["index"], split=obj["split"], q=obj["q"], zf=obj["zf"],
                bathy_file=obj["bathy"], velocity_file=obj["velocity"],
                depth_file=obj["depth"], digest=obj["digest"],
            ))
        return SampleSet(root, records, failures, grid)


def _assign_splits(n: int, validation_fraction: float, seed: int) -> list[str]:
    rng = make_rng(seed, "split")
    n_val = int(round(validation_fraction * n))
    tags = np.array(["train"] * n, dtype=object)
    val_idx = rng.choice(n, size=n_val, replace=False)
    tags[val_idx] = "validation"
    return list(tags)


def build_dataset(
    bathys: list[ScalarField],
    curve: StageDischargeCurve,
    bcs_per_bathy: int,
    cfg: OracleConfig,
    seed: int,
    out_dir,
    validation_fraction: float = 0.0,
    split: str | None = None,
    dtype: str = "float32",
) -> SampleSet:
    """Solve every (bathymetry, BC) pair and write fields plus a manifest.

    BC draws use child seeds from ``seed`` per pair index, so builds are
    reproducible and parallelizable. Failed solves are recorded in the
    manifest and skipped. Raises if every solve fails.
    """
    if not bathys:
        raise ValueError("bathymetry list is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_total = len(bathys) * bcs_per_bathy
    if split is None:
        tags = _assign_splits(n_total, validation_fraction, seed)
    else:
        tags = [split] * n_total

    records, failures = [], []
    pair = 0
    for b_idx, bathy in enumerate(bathys):
        rng = make_rng(seed, "bc", b_idx)
        qs = rng.uniform(curve.q_min, curve.q_max, size=bcs_per_bathy)
        for q in qs:
            bc = BoundaryCondition(float(q), float(curve.stage(q)))
            try:
                vel, depth = solve_steady(bathy, bc, cfg)
            except SolverError as exc:
                failures.append({
                    "index": pair, "q": bc.discharge_q, "zf": bc.stage_zf,
                    "reason": str(exc),
                })
                pair += 1
                continue
            names = {
                "bathy": f"sample_{pair:05d}_bathy.rfs",
                "velocity": f"sample_{pair:05d}_vel.rfs",
                "depth": f"sample_{pair:05d}_depth.rfs",
            }
            save_field(bathy, out / names["bathy"], dtype=dtype, name="bathymetry")
            save_field(vel, out / names["velocity"], dtype=dtype, name="velocity")
            save_field(depth, out / names["depth"], dtype=dtype, name="depth")
            h = hashlib.sha256()
            for key in ("bathy", "velocity", "depth"):
                h.update(file_digest(out / names[key]).encode())
            records.append(SampleRecord(
                index=pair, split=tags[pair], q=bc.discharge_q, zf=bc.stage_zf,
                bathy_file=names["bathy"], velocity_file=names["velocity"],
                depth_file=names["depth"], digest=h.hexdigest(),
            ))
            pair += 1
    if not records:
        raise SolverError("all forward solves failed")
    ds = SampleSet(out, records, failures, bathys[0].grid)
    ds.save_manifest()
    return ds
