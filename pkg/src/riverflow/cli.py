"""Command-line entry point.

Subcommands mirror the pipeline stages so each step can run standalone:
gen-bathy, gen-bc, simulate, build-dataset, invert, train, predict,
predict-segment, evaluate, sensitivity, partial-eval, error-bins,
propagate, and run-pipeline for the whole chain. Exit codes: 0 success,
2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riverflow",
        description="Desk-scale riverine flow-velocity surrogate pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bc", help="sample boundary conditions from a rating curve")
    p.add_argument("--gauge", required=True, help="gauge CSV path")
    p.add_argument("--units", choices=("si", "us"), default="si")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="BC manifest CSV")
    p.add_argument("--curve-out", help="also write the fitted rating curve")

    p = sub.add_parser("gen-bathy", help="augmented draws from a bathymetry distribution")
    p.add_argument("--posterior", required=True, help="low-rank Gaussian file")
    p.add_argument("--beta", type=float, default=1.2)
    p.add_argument("--lx", type=float, default=115.0)
    p.add_argument("--ly", type=float, default=29.0)
    p.add_argument("--weight-min", type=float, default=0.15)
    p.add_argument("--weight-power", type=float, default=1.0)
    p.add_argument("--n", type=int, default=450)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="one steady forward solve")
    p.add_argument("--bathy", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--zf", type=float, required=True)
    p.add_argument("--mode", choices=("fixed_stage", "backwater"), default="backwater")
    p.add_argument("--manning", type=float, default=0.03)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("build-dataset", help="solve a bathymetry set under sampled BCs")
    p.add_argument("--bathys", required=True, help="directory of RFS1 bathymetry files")
    p.add_argument("--curve", required=True, help="rating curve file")
    p.add_argument("--per-bathy", type=int, default=10)
    p.add_argument("--validation-fraction", type=float, default=0.10)
    p.add_argument("--split", help="force one split tag (e.g. test)")
    p.add_argument("--mode", choices=("fixed_stage", "backwater"), default="backwater")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("invert", help="estimate a bathymetry posterior from observations")
    p.add_argument("--obs", required=True, help="observation JSON file")
    p.add_argument("--prior", required=True, help="low-rank Gaussian file")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--zf", type=float, required=True)
    p.add_argument("--npc", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=5)
    p.add_argument("--mode", choices=("fixed_stage", "backwater"), default="backwater")
    p.add_argument("--out", required=True, help="posterior file")

    p = sub.add_parser("train", help="fit one surrogate variant")
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", required=True,
                   choices=("linear", "pca-dnn", "se", "sve"))
    p.add_argument("--scope", choices=("global", "local"), default="global")
    p.add_argument("--target", choices=("magnitude", "easting", "northing"),
                   default="magnitude")
    p.add_argument("--spec", help="flat key=value training-spec file")
    p.add_argument("--latent-dim", type=int, default=50)
    p.add_argument("--window-span", type=int, default=16)
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("predict", help="predict one field with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--bathy", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--zf", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict-segment", help="tile a local model over a segment")
    p.add_argument("--model", required=True)
    p.add_argument("--bathy", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--zf", type=float, required=True)
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--strategy", choices=("dense", "disjoint"), default="dense")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="pooled RMSE of a model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="write metrics JSON here")

    p = sub.add_parser("sensitivity", help="latent-component sensitivity report")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("partial-eval", help="accuracy vs measured cross sections")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--posterior", required=True)
    p.add_argument("--sections", required=True,
                   help="comma-separated measured-section counts")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("error-bins", help="discharge-binned error statistics")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="all")
    p.add_argument("--q-min", type=float, default=85.0)
    p.add_argument("--q-max", type=float, default=840.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("propagate", help="push a bathymetry posterior through a model")
    p.add_argument("--model", required=True)
    p.add_argument("--posterior", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--zf", type=float, required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run-pipeline", help="execute the whole pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dry-run", action="store_true",
                   help="print the stage plan without writing files")

    return parser


def _load_model(path):
    from .surrogates import load_model
    return load_model(path)


def _load_samples(path):
    from .dataset import SampleSet
    return SampleSet.load(path)


def cmd_gen_bc(args) -> int:
    from .scenario import fit_stage_discharge, ingest_gauge_csv, sample_bc, save_curve
    records = ingest_gauge_csv(args.gauge, units=args.units)
    curve = fit_stage_discharge(records)
    if args.curve_out:
        save_curve(curve, args.curve_out)
    bcs = sample_bc(curve, args.n, args.seed)
    with open(args.out, "w") as fh:
        fh.write("discharge_m3s,stage_m\n")
        for bc in bcs:
            fh.write(f"{bc.discharge_q!r},{bc.stage_zf!r}\n")
    print(f"wrote {len(bcs)} boundary conditions to {args.out}")
    return EXIT_OK


def cmd_gen_bathy(args) -> int:
    from .geostat import SeparableKernel, augment_posterior, load_low_rank, sine_weight_profile
    from .grid import save_field
    posterior = load_low_rank(args.posterior)
    kernel = SeparableKernel(args.beta, args.lx, args.ly)
    weights = sine_weight_profile(posterior.mean.grid.n_across,
                                  args.weight_min, args.weight_power)
    fields = augment_posterior(posterior, kernel, weights, args.n, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(fields):
        save_field(f, out / f"bathy_{i:05d}.rfs", name="bathymetry")
    print(f"wrote {len(fields)} bathymetries to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .grid import BoundaryCondition, load_field, save_field
    from .oracle import OracleConfig, solve_steady
    bathy = load_field(args.bathy)
    bc = BoundaryCondition(args.q, args.zf)
    vel, depth = solve_steady(bathy, bc, OracleConfig(manning_n=args.manning,
                                                      mode=args.mode))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(vel, out / "velocity.rfs", name="velocity")
    save_field(depth, out / "depth.rfs", name="depth")
    print(f"wrote velocity and depth fields to {out}")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    from .dataset import build_dataset
    from .grid import load_field
    from .oracle import OracleConfig
    from .scenario import load_curve
    bathy_files = sorted(Path(args.bathys).glob("*.rfs"))
    if not bathy_files:
        raise ValueError(f"no .rfs files under {args.bathys}")
    bathys = [load_field(p) for p in bathy_files]
    curve = load_curve(args.curve)
    ds = build_dataset(bathys, curve, args.per_bathy, OracleConfig(mode=args.mode),
                       args.seed, args.out,
                       validation_fraction=args.validation_fraction,
                       split=args.split)
    print(f"dataset at {args.out}: {len(ds)} samples, {len(ds.failures)} failures")
    return EXIT_OK


def cmd_invert(args) -> int:
    from .geostat import load_low_rank, save_low_rank
    from .grid import BoundaryCondition
    from .inversion import InversionConfig, invert
    from .oracle import ObservationSet, OracleConfig
    with open(args.obs) as fh:
        obj = json.load(fh)
    obs = ObservationSet(np.asarray(obj["locations"]), np.asarray(obj["east"]),
                         np.asarray(obj["north"]), float(obj["noise_sigma"]))
    prior = load_low_rank(args.prior)
    cfg = InversionConfig(n_pc=args.npc,
                          obs_noise_sigma=max(obs.noise_sigma, 1e-4),
                          max_gn_iter=args.max_iter)
    result = invert(obs, BoundaryCondition(args.q, args.zf), prior, cfg,
                    oracle_cfg=OracleConfig(mode=args.mode))
    save_low_rank(result.posterior, args.out)
    print(f"posterior written to {args.out} "
          f"(converged={result.converged}, objective={result.objective_history[-1]:.4g})")
    return EXIT_OK


def _parse_spec_file(path):
    from .surrogates import TrainSpec
    kv = {}
    if path:
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, val = (s.strip() for s in line.split("=", 1))
            kv[key] = val
    kwargs = {}
    casts = {"optimizer": str, "learning_rate": float, "decay": float,
             "batch_size": int, "l2_coeff": float, "epochs": int, "seed": int,
             "kl_weight": float}
    for key, val in kv.items():
        if key not in casts:
            raise ValueError(f"unknown training-spec key {key!r}")
        kwargs[key] = casts[key](val)
    return TrainSpec(**kwargs)


def cmd_train(args) -> int:
    from .surrogates import save_model, train_global, train_local
    samples = _load_samples(args.dataset)
    spec = _parse_spec_file(args.spec)
    variant = args.variant.replace("-", "_")
    if args.scope == "global":
        model = train_global(samples, variant, spec, target=args.target,
                             latent_dim=args.latent_dim)
    else:
        model = train_local(samples, variant, spec, target=args.target,
                            latent_dim=args.latent_dim, window_span=args.window_span)
    save_model(model, args.out)
    best = min(h["val_loss"] for h in model.history)
    print(f"checkpoint {args.out} (best validation loss {best:.6g})")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .grid import BoundaryCondition, load_field, save_field
    model = _load_model(args.model)
    bathy = load_field(args.bathy)
    pred = model.predict(bathy, BoundaryCondition(args.q, args.zf))
    save_field(pred, args.out, name=model.target)
    print(f"prediction written to {args.out}")
    return EXIT_OK


def cmd_predict_segment(args) -> int:
    from .grid import BoundaryCondition, ScalarField, load_field, save_field
    from .surrogates import predict_segment
    model = _load_model(args.model)
    bathy = load_field(args.bathy)
    seg = predict_segment(model, bathy, BoundaryCondition(args.q, args.zf),
                          args.start, args.length, args.strategy)
    np.savetxt(args.out, seg, fmt="%.10g", delimiter="\t")
    print(f"segment prediction ({seg.shape[0]}x{seg.shape[1]}) written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .surrogates import pooled_rmse, local_pooled_rmse
    model = _load_model(args.model)
    samples = _load_samples(args.dataset)
    if model.scope == "global":
        rmse = pooled_rmse(model, samples, args.split)
    else:
        rmse = local_pooled_rmse(model, samples, args.split)
    payload = {"split": args.split, "variant": model.variant,
               "scope": model.scope, "target": model.target, "rmse": rmse}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    from .analysis import latent_sensitivity
    from .report import emit_sensitivity
    model = _load_model(args.model)
    samples = _load_samples(args.dataset)
    rep = latent_sensitivity(model, samples, args.split)
    files = emit_sensitivity(rep, args.out)
    print(f"sensitivity report: {', '.join(files)}")
    return EXIT_OK


def cmd_partial_eval(args) -> int:
    from .analysis import partial_bathymetry_eval
    from .geostat import load_low_rank
    from .report import emit_partial_eval
    model = _load_model(args.model)
    samples = _load_samples(args.dataset)
    posterior = load_low_rank(args.posterior)
    sections = [int(s) for s in args.sections.split(",") if s.strip()]
    res = partial_bathymetry_eval(model, samples, posterior.mean, sections,
                                  tag=args.split)
    files = emit_partial_eval(res, args.out, tag=args.split)
    print(f"partial evaluation: {', '.join(files)}")
    return EXIT_OK


def cmd_error_bins(args) -> int:
    from .analysis import error_vs_discharge
    from .report import emit_error_bins
    from .surrogates import per_sample_rmse
    model = _load_model(args.model)
    samples = _load_samples(args.dataset)
    errors, qs = per_sample_rmse(model, samples, args.split)
    bins = error_vs_discharge(errors, qs, args.q_min, args.q_max, tag=args.split)
    files = emit_error_bins(bins, args.out)
    print(f"error bins: {', '.join(files)}")
    return EXIT_OK


def cmd_propagate(args) -> int:
    from .geostat import load_low_rank
    from .grid import BoundaryCondition, save_field
    from .surrogates import predict_posterior_ensemble
    model = _load_model(args.model)
    posterior = load_low_rank(args.posterior)
    mean, std = predict_posterior_ensemble(model, posterior,
                                           BoundaryCondition(args.q, args.zf),
                                           args.n, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(mean, out / "ensemble_mean.rfs", dtype="float64")
    save_field(std, out / "ensemble_std.rfs", dtype="float64")
    print(f"ensemble mean/std written to {out}")
    return EXIT_OK


def cmd_run_pipeline(args) -> int:
    from .pipeline import PipelineRun, parse_config, stage_plan
    cfg = parse_config(args.config)
    cfg.jobs = args.jobs
    if args.dry_run:
        for stage in stage_plan(cfg):
            print(f"plan: {stage}")
        return EXIT_OK
    run = PipelineRun(cfg, args.out)
    run.run()
    print(f"pipeline complete: {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen-bc": cmd_gen_bc,
    "gen-bathy": cmd_gen_bathy,
    "simulate": cmd_simulate,
    "build-dataset": cmd_build_dataset,
    "invert": cmd_invert,
    "train": cmd_train,
    "predict": cmd_predict,
    "predict-segment": cmd_predict_segment,
    "evaluate": cmd_evaluate,
    "sensitivity": cmd_sensitivity,
    "partial-eval": cmd_partial_eval,
    "error-bins": cmd_error_bins,
    "propagate": cmd_propagate,
    "run-pipeline": cmd_run_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .pipeline import ConfigError, StageError
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
