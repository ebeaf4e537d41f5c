"""End-to-end pipeline: posterior estimation, augmentation, dataset
generation, surrogate training, and the full evaluation battery.

Driven by a flat key=value config file. Every stage derives its random
streams from the master seed, every artifact lands in the run directory,
and a metrics manifest (with a digest) makes reruns comparable bit for
bit.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .analysis import (
    error_vs_discharge,
    latent_sensitivity,
    partial_bathymetry_eval,
    scaled_section_counts,
)
from .dataset import SampleSet, build_dataset
from .geostat import (
    LowRankGaussian,
    SeparableKernel,
    augment_posterior,
    build_separable_factors,
    sine_weight_profile,
    save_low_rank,
)
from .grid import BoundaryCondition, ScalarField, make_bend_grid, save_field
from .inversion import InversionConfig, invert
from .oracle import OracleConfig, make_observations, make_synthetic_truth, solve_steady
from .report import emit_error_bins, emit_partial_eval, emit_sensitivity
from .scenario import default_curve, fit_stage_discharge, ingest_gauge_csv
from .seeding import derive_seed
from .surrogates import (
    TrainSpec,
    local_pooled_rmse,
    per_sample_rmse,
    pooled_rmse,
    predict_posterior_ensemble,
    save_model,
    train_global,
    train_local,
)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    # grid
    n_across: int = 41
    n_along: int = 64
    spacing_m: float = 2.4
    bend_deg: float = 60.0
    # augmentation kernel and weighting
    beta: float = 1.2
    l_x: float = 115.0
    l_y: float = 29.0
    weight_min: float = 0.15
    weight_power: float = 1.0
    rank_x: int = 60
    rank_y: int = 20
    max_rank: int = 100
    # oracle
    manning_n: float = 0.03
    h_min: float = 0.05
    oracle_mode: str = "backwater"
    oracle_max_iter: int = 200
    oracle_tol: float = 1e-6
    # scenario
    gauge_csv: str = ""
    # inversion
    invert_enabled: bool = True
    n_obs: int = 150
    obs_noise_fraction: float = 0.10
    n_pc: int = 40
    max_gn_iter: int = 4
    prior_beta: float = 1.0
    reference_q: float = 600.0
    # dataset
    n_bathy: int = 60
    bcs_per_bathy: int = 5
    validation_fraction: float = 0.10
    test_bathy: int = 20
    test_bcs_per_bathy: int = 5
    # training
    latent_dim: int = 50
    variants: tuple = ("linear", "pca_dnn", "se", "sve")
    local_variants: tuple = ("linear", "se")
    target: str = "magnitude"
    window_span: int = 16
    epochs: dict = dataclass_field(default_factory=dict)
    l2: dict = dataclass_field(default_factory=dict)
    kl_weight: float = 1e-3
    batch_size: int = 32
    learning_rate: float = 0.001
    decay: float = 0.001
    # analysis
    propagate_n: int = 100
    sections: tuple = ()
    # run
    master_seed: int = 20240501
    jobs: int = 1

    DEFAULT_EPOCHS = {
        "linear": 400, "pca_dnn": 400, "se": 150, "sve": 150,
        "local_linear": 60, "local_pca_dnn": 60, "local_se": 40, "local_sve": 40,
    }
    DEFAULT_L2 = {
        "linear": 1e-5, "pca_dnn": 1e-4, "se": 1e-4, "sve": 1e-4,
        "local_linear": 1e-5, "local_pca_dnn": 1e-4, "local_se": 1e-4,
        "local_sve": 1e-4,
    }

    def epochs_for(self, variant: str, scope: str) -> int:
        key = variant if scope == "global" else f"local_{variant}"
        return int(self.epochs.get(key, self.DEFAULT_EPOCHS[key]))

    def l2_for(self, variant: str, scope: str) -> float:
        key = variant if scope == "global" else f"local_{variant}"
        return float(self.l2.get(key, self.DEFAULT_L2[key]))


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}

_INT_KEYS = {"n_across", "n_along", "rank_x", "rank_y", "max_rank",
             "oracle_max_iter", "n_obs", "n_pc", "max_gn_iter", "n_bathy",
             "bcs_per_bathy", "test_bathy", "test_bcs_per_bathy", "latent_dim",
             "window_span", "propagate_n", "master_seed", "jobs", "batch_size"}
_FLOAT_KEYS = {"spacing_m", "bend_deg", "beta", "l_x", "l_y", "weight_min",
               "weight_power", "manning_n", "h_min", "oracle_tol",
               "obs_noise_fraction", "prior_beta", "reference_q",
               "validation_fraction", "kl_weight", "learning_rate", "decay"}
_STR_KEYS = {"oracle_mode", "gauge_csv", "target"}
_BOOL_KEYS = {"invert_enabled"}
_TUPLE_KEYS = {"variants", "local_variants", "sections"}


def parse_config(path) -> PipelineConfig:
    """Flat ``key = value`` file; '#' starts a comment.

    Per-variant epoch and L2 overrides use dotted keys, e.g.
    ``epochs.se = 200`` or ``l2.local_linear = 1e-5``.
    """
    cfg = PipelineConfig()
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(val))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(val))
            elif key in _STR_KEYS:
                setattr(cfg, key, val)
            elif key in _BOOL_KEYS:
                setattr(cfg, key, _BOOL[val.lower()])
            elif key in _TUPLE_KEYS:
                items = tuple(s.strip() for s in val.split(",") if s.strip())
                if key == "sections":
                    items = tuple(int(s) for s in items)
                setattr(cfg, key, items)
            elif key.startswith("epochs."):
                cfg.epochs[key.split(".", 1)[1]] = int(val)
            elif key.startswith("l2."):
                cfg.l2[key.split(".", 1)[1]] = float(val)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except (ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    if not 0.0 < cfg.validation_fraction < 1.0:
        raise ConfigError("validation_fraction must be in (0, 1)")
    if cfg.beta < 0:
        raise ConfigError("missing or negative kernel beta")
    for v in cfg.variants + cfg.local_variants:
        if v not in ("linear", "pca_dnn", "se", "sve"):
            raise ConfigError(f"unknown variant {v!r}")
    if cfg.target not in ("magnitude", "easting", "northing"):
        raise ConfigError(f"unknown target {cfg.target!r}")
    if cfg.oracle_mode not in ("fixed_stage", "backwater"):
        raise ConfigError(f"unknown oracle mode {cfg.oracle_mode!r}")
    if cfg.gauge_csv and not Path(cfg.gauge_csv).exists():
        raise ConfigError(f"gauge_csv does not exist: {cfg.gauge_csv}")


STAGES = ("prepare", "invert", "gen-bathy", "build-dataset", "train",
          "evaluate", "sensitivity", "partial-eval", "error-bins", "propagate")


def stage_plan(cfg: PipelineConfig) -> list[str]:
    plan = list(STAGES)
    if not cfg.invert_enabled:
        plan.remove("invert")
    return plan


class PipelineRun:
    def __init__(self, cfg: PipelineConfig, out_dir, log=print):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.log = log
        self.manifest: list[dict] = []
        self.metrics: dict = {}

    def record(self, stage: str, name: str, path=None, **extra):
        entry = {"stage": stage, "name": name, **extra}
        if path is not None:
            entry["path"] = str(Path(path).relative_to(self.out))
            entry["digest"] = _file_digest(path)
        self.manifest.append(entry)

    def run(self) -> Path:
        cfg = self.cfg
        self.out.mkdir(parents=True, exist_ok=True)
        t_start = time.time()
        state: dict = {}
        for stage in stage_plan(cfg):
            self.log(f"[riverflow] stage {stage} ...")
            t0 = time.time()
            try:
                getattr(self, "stage_" + stage.replace("-", "_"))(state)
            except Exception as exc:
                self._write_manifest(partial=True)
                raise StageError(stage, exc) from exc
            self.log(f"[riverflow] stage {stage} done in {time.time() - t0:.1f}s")
        digest = self._write_metrics()
        self.record("run", "metrics", self.out / "metrics.json",
                    wall_time_s=round(time.time() - t_start, 1))
        self._write_manifest()
        self.log(f"[riverflow] metrics digest {digest}")
        return self.out

    # ------------------------------------------------------------- stages

    def stage_prepare(self, state):
        cfg = self.cfg
        grid = make_bend_grid(cfg.n_across, cfg.n_along, cfg.spacing_m, cfg.bend_deg)
        state["grid"] = grid
        state["truth"] = make_synthetic_truth(grid)
        save_field(state["truth"], self.out / "truth_bathy.rfs", dtype="float64",
                   name="bathymetry")
        self.record("prepare", "truth_bathy", self.out / "truth_bathy.rfs")
        if cfg.gauge_csv:
            state["curve"] = fit_stage_discharge(ingest_gauge_csv(cfg.gauge_csv))
        else:
            state["curve"] = default_curve()
        prior_kernel = SeparableKernel(cfg.prior_beta, cfg.l_x, cfg.l_y)
        prior = build_separable_factors(
            prior_kernel, grid, min(cfg.rank_x, grid.n_along),
            min(cfg.rank_y, grid.n_across), cfg.max_rank
        )
        # prior mean: a heavily smoothed bed, the analog of coarse survey
        # knowledge of the channel shape without its fine structure
        prior_mean = ScalarField(grid, _smooth_mean(state["truth"].values))
        state["prior"] = LowRankGaussian(prior_mean, prior.factor)
        save_low_rank(state["prior"], self.out / "prior.rfg")
        self.record("prepare", "prior", self.out / "prior.rfg")

    def stage_invert(self, state):
        cfg = self.cfg
        bc = BoundaryCondition(cfg.reference_q, float(state["curve"].stage(cfg.reference_q)))
        state["reference_bc"] = bc
        oracle_cfg = self._oracle_cfg()
        vel, _ = solve_steady(state["truth"], bc, oracle_cfg)
        obs = make_observations(vel, cfg.n_obs, cfg.obs_noise_fraction,
                                derive_seed(cfg.master_seed, "observe"))
        sigma = max(obs.noise_sigma, 1e-4)
        result = invert(obs, bc, state["prior"],
                        InversionConfig(n_pc=cfg.n_pc, obs_noise_sigma=sigma,
                                        max_gn_iter=cfg.max_gn_iter),
                        oracle_cfg=oracle_cfg)
        state["posterior"] = result.posterior
        save_low_rank(result.posterior, self.out / "posterior.rfg")
        self.record("invert", "posterior", self.out / "posterior.rfg",
                    converged=result.converged,
                    objective=result.objective_history[-1])
        self.metrics["inversion"] = {
            "converged": result.converged,
            "objective_history": [round(v, 6) for v in result.objective_history],
            "posterior_mean_rmse_vs_truth": _rmse(result.posterior.mean.values,
                                                  state["truth"].values),
            "prior_mean_rmse_vs_truth": _rmse(state["prior"].mean.values,
                                              state["truth"].values),
        }

    def stage_gen_bathy(self, state):
        cfg = self.cfg
        posterior = state.get("posterior", state["prior"])
        state["posterior"] = posterior
        kernel = SeparableKernel(cfg.beta, cfg.l_x, cfg.l_y)
        weights = sine_weight_profile(cfg.n_across, cfg.weight_min, cfg.weight_power)
        state["train_bathys"] = augment_posterior(
            posterior, kernel, weights, cfg.n_bathy,
            derive_seed(cfg.master_seed, "augment", "train"),
            cfg.rank_x, cfg.rank_y, cfg.max_rank,
        )
        state["test_bathys"] = augment_posterior(
            posterior, kernel, weights, cfg.test_bathy,
            derive_seed(cfg.master_seed, "augment", "test"),
            cfg.rank_x, cfg.rank_y, cfg.max_rank,
        )
        self.record("gen-bathy", "train_bathys", count=len(state["train_bathys"]))
        self.record("gen-bathy", "test_bathys", count=len(state["test_bathys"]))

    def stage_build_dataset(self, state):
        cfg = self.cfg
        oracle_cfg = self._oracle_cfg()
        train_dir = self.out / "dataset"
        ds = build_dataset(state["train_bathys"], state["curve"], cfg.bcs_per_bathy,
                           oracle_cfg, derive_seed(cfg.master_seed, "dataset", "train"),
                           train_dir, validation_fraction=cfg.validation_fraction)
        test_ds = build_dataset(state["test_bathys"], state["curve"],
                                cfg.test_bcs_per_bathy, oracle_cfg,
                                derive_seed(cfg.master_seed, "dataset", "test"),
                                self.out / "dataset_test", split="test")
        merged = _MergedSampleSet(ds, test_ds)
        state["samples"] = merged
        self.record("build-dataset", "manifest", train_dir / "manifest.jsonl",
                    n_ok=len(merged.records), n_failed=len(merged.failures))
        self.record("build-dataset", "test_manifest",
                    test_ds.root / "manifest.jsonl")
        self.metrics["dataset"] = {
            "n_train": len(merged.split("train")),
            "n_validation": len(merged.split("validation")),
            "n_test": len(merged.split("test")),
            "n_failed": len(merged.failures),
            "manifest_digest": _file_digest(train_dir / "manifest.jsonl"),
            "test_manifest_digest": _file_digest(test_ds.root / "manifest.jsonl"),
        }

    def stage_train(self, state):
        cfg = self.cfg
        samples = state["samples"]
        state["models"] = {}
        state["local_models"] = {}
        for variant in cfg.variants:
            spec = TrainSpec(optimizer="adam", learning_rate=cfg.learning_rate,
                             decay=cfg.decay, batch_size=cfg.batch_size,
                             l2_coeff=cfg.l2_for(variant, "global"),
                             epochs=cfg.epochs_for(variant, "global"),
                             seed=derive_seed(cfg.master_seed, "train", variant),
                             kl_weight=cfg.kl_weight)
            model = train_global(samples, variant, spec, target=cfg.target,
                                 latent_dim=cfg.latent_dim)
            path = self.out / f"model_global_{variant}.ckpt"
            save_model(model, path)
            self.record("train", f"global_{variant}", path,
                        best_val=min(h["val_loss"] for h in model.history))
            state["models"][variant] = model
        for variant in cfg.local_variants:
            spec = TrainSpec(optimizer="adam", learning_rate=cfg.learning_rate,
                             decay=cfg.decay, batch_size=cfg.batch_size,
                             l2_coeff=cfg.l2_for(variant, "local"),
                             epochs=cfg.epochs_for(variant, "local"),
                             seed=derive_seed(cfg.master_seed, "train_local", variant),
                             kl_weight=cfg.kl_weight)
            model = train_local(samples, variant, spec, target=cfg.target,
                                latent_dim=cfg.latent_dim, window_span=cfg.window_span)
            path = self.out / f"model_local_{variant}.ckpt"
            save_model(model, path)
            self.record("train", f"local_{variant}", path,
                        best_val=min(h["val_loss"] for h in model.history))
            state["local_models"][variant] = model

    def stage_evaluate(self, state):
        cfg = self.cfg
        samples = state["samples"]
        table = {}
        for variant, model in state["models"].items():
            table[variant] = {tag: pooled_rmse(model, samples, tag)
                              for tag in ("train", "validation", "test")}
        self.metrics["global_rmse"] = table
        local_table = {}
        for variant, model in state["local_models"].items():
            local_table[variant] = {
                "test": local_pooled_rmse(model, samples, "test", "dense"),
                "validation": local_pooled_rmse(model, samples, "validation", "dense"),
            }
        self.metrics["local_rmse"] = local_table

    def stage_sensitivity(self, state):
        cfg = self.cfg
        samples = state["samples"]
        out = {}
        for variant, model in state["models"].items():
            per_tag = {}
            for tag in ("train", "validation", "test"):
                rep = latent_sensitivity(model, samples, tag)
                emit_sensitivity(rep, self.out / "reports" / variant)
                first5 = float(np.mean(rep.delta_rmse[:5]))
                last10 = float(np.mean(rep.delta_rmse[-10:]))
                per_tag[tag] = {
                    "first5_mean": first5,
                    "last10_mean": last10,
                    "baseline_rmse": rep.baseline_rmse,
                }
            out[variant] = per_tag
        self.metrics["sensitivity"] = out

    def stage_partial_eval(self, state):
        cfg = self.cfg
        samples = state["samples"]
        sections = list(cfg.sections) if cfg.sections else \
            scaled_section_counts(cfg.n_along)
        sections = sorted(set([0] + sections + [cfg.n_along]))
        posterior_mean = state["posterior"].mean
        out = {}
        for variant, model in state["models"].items():
            res = partial_bathymetry_eval(model, samples, posterior_mean,
                                          sections, tag="test")
            emit_partial_eval(res, self.out / "reports" / variant)
            out[variant] = {str(s): r for s, r in sorted(res.items())}
        self.metrics["partial_eval"] = {"sections": sections, "rmse": out}

    def stage_error_bins(self, state):
        cfg = self.cfg
        samples = state["samples"]
        curve = state["curve"]
        out = {}
        for variant, model in state["models"].items():
            errors, qs = per_sample_rmse(model, samples, "all")
            bins = error_vs_discharge(errors, qs, curve.q_min, curve.q_max, tag="all")
            emit_error_bins(bins, self.out / "reports" / variant)
            out[variant] = [
                {"q_lo": b.q_lo, "q_hi": b.q_hi, "count": b.count,
                 "q1": _nan_none(b.q1), "median": _nan_none(b.median),
                 "q3": _nan_none(b.q3), "n_outliers": len(b.outliers)}
                for b in bins.bins
            ]
        self.metrics["error_bins"] = out

    def stage_propagate(self, state):
        cfg = self.cfg
        posterior = state["posterior"]
        bc = state.get("reference_bc") or BoundaryCondition(
            cfg.reference_q, float(state["curve"].stage(cfg.reference_q)))
        seed = derive_seed(cfg.master_seed, "propagate")
        oracle_cfg = self._oracle_cfg()
        target = cfg.target

        def oracle_forward(bathy, bc_):
            vel, _ = solve_steady(bathy, bc_, oracle_cfg)
            if target == "magnitude":
                from .grid import velocity_magnitude
                return velocity_magnitude(vel)
            return ScalarField(vel.grid, vel.easting if target == "easting"
                               else vel.northing)

        ref_mean, ref_std = predict_posterior_ensemble(
            next(iter(state["models"].values())), posterior, bc, cfg.propagate_n,
            seed, forward=oracle_forward)
        save_field(ref_mean, self.out / "propagate_oracle_mean.rfs", dtype="float64")
        save_field(ref_std, self.out / "propagate_oracle_std.rfs", dtype="float64")
        self.record("propagate", "oracle_mean", self.out / "propagate_oracle_mean.rfs")
        out = {}
        for variant, model in state["models"].items():
            mean, std = predict_posterior_ensemble(model, posterior, bc,
                                                   cfg.propagate_n, seed)
            save_field(mean, self.out / f"propagate_{variant}_mean.rfs", dtype="float64")
            save_field(std, self.out / f"propagate_{variant}_std.rfs", dtype="float64")
            out[variant] = {
                "mean_rmse_vs_oracle": _rmse(mean.values, ref_mean.values),
                "std_rmse_vs_oracle": _rmse(std.values, ref_std.values),
                "std_min": float(std.values.min()),
            }
        self.metrics["propagate"] = {"n": cfg.propagate_n,
                                     "q": bc.discharge_q, "zf": bc.stage_zf,
                                     "by_variant": out}

    # ------------------------------------------------------------- helpers

    def _oracle_cfg(self) -> OracleConfig:
        cfg = self.cfg
        return OracleConfig(manning_n=cfg.manning_n, h_min=cfg.h_min,
                            mode=cfg.oracle_mode, max_iter=cfg.oracle_max_iter,
                            tol=cfg.oracle_tol)

    def _write_metrics(self) -> str:
        text = json.dumps(self.metrics, sort_keys=True, indent=2) + "\n"
        (self.out / "metrics.json").write_text(text)
        digest = hashlib.sha256(text.encode()).hexdigest()
        (self.out / "metrics.digest").write_text(digest + "\n")
        return digest

    def _write_manifest(self, partial: bool = False):
        lines = [json.dumps(e, sort_keys=True) for e in self.manifest]
        if partial:
            lines.append(json.dumps({"stage": "INCOMPLETE"}))
        (self.out / "run_manifest.jsonl").write_text("\n".join(lines) + "\n")


class _MergedSampleSet(SampleSet):
    """Train/validation records live in one directory, test in another."""

    def __init__(self, train_ds: SampleSet, test_ds: SampleSet):
        super().__init__(train_ds.root,
                         list(train_ds.records) + list(test_ds.records),
                         list(train_ds.failures) + list(test_ds.failures),
                         train_ds._grid)
        self._test_root = test_ds.root

    def _root_for(self, rec):
        return self._test_root if rec.split == "test" else self.root

    def load_bathy(self, rec):
        from .grid import load_field
        return load_field(self._root_for(rec) / rec.bathy_file, self._grid)

    def load_velocity(self, rec):
        from .grid import load_field
        return load_field(self._root_for(rec) / rec.velocity_file, self._grid)


def _smooth_mean(values: np.ndarray) -> np.ndarray:
    """Heavily smoothed copy of a field: the prior's plausible mean bed."""
    ny, nx = values.shape
    out = values.copy()
    for _ in range(8):
        padded = np.pad(out, 1, mode="edge")
        out = (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2]
               + padded[1:-1, 2:] + padded[1:-1, 1:-1]) / 5.0
    return out


def _rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _nan_none(x: float):
    return None if np.isnan(x) else float(x)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def run_pipeline(config_path, out_dir, log=print) -> Path:
    cfg = parse_config(config_path)
    return PipelineRun(cfg, out_dir, log=log).run()
