import json
from pathlib import Path

import numpy as np
import pytest

from riverflow.cli import main
from riverflow.grid import load_field, make_bend_grid, save_field
from riverflow.oracle import make_synthetic_truth


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def gauge_csv(workdir):
    p = workdir / "gauge.csv"
    rows = ["timestamp,discharge_m3s,stage_m"]
    rng = np.random.default_rng(0)
    for i, q in enumerate(np.linspace(85, 840, 40)):
        z = -6e-6 * q * q + 0.0128 * q + 28.45 + rng.normal(0, 0.03)
        rows.append(f"2020-01-{i % 28 + 1:02d}T{i % 24:02d}:00:00,{q},{z}"
                    if i % 28 + 1 <= 28 else "")
    # regenerate timestamps strictly increasing
    rows = ["timestamp,discharge_m3s,stage_m"]
    for i, q in enumerate(np.linspace(85, 840, 40)):
        z = -6e-6 * q * q + 0.0128 * q + 28.45
        rows.append(f"2020-01-01T{i // 60:02d}:{i % 60:02d}:00,{q},{z}")
    p.write_text("\n".join(rows) + "\n")
    return p


class TestGenBC:
    def test_writes_manifest_and_curve(self, workdir, gauge_csv):
        out = workdir / "bcs.csv"
        curve_out = workdir / "curve.txt"
        rc = main(["gen-bc", "--gauge", str(gauge_csv), "--n", "12",
                   "--seed", "3", "--out", str(out), "--curve-out", str(curve_out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "discharge_m3s,stage_m"
        assert len(lines) == 13
        assert curve_out.exists()

    def test_bad_gauge_exits_2(self, workdir):
        bad = workdir / "bad.csv"
        bad.write_text("timestamp,discharge_m3s\n2020-01-01T00:00:00,5\n")
        rc = main(["gen-bc", "--gauge", str(bad), "--n", "1", "--seed", "0",
                   "--out", str(workdir / "x.csv")])
        assert rc == 2


class TestSimulate:
    def test_simulate_writes_fields(self, workdir):
        grid = make_bend_grid(9, 14, 2.4)
        truth = make_synthetic_truth(grid, bank_elev=29.0, max_depth=3.0)
        bathy_path = workdir / "truth.rfs"
        save_field(truth, bathy_path, dtype="float64", name="bathymetry")
        out = workdir / "sim"
        rc = main(["simulate", "--bathy", str(bathy_path), "--q", "300",
                   "--zf", "30.5", "--mode", "fixed_stage", "--out", str(out)])
        assert rc == 0
        vel = load_field(out / "velocity.rfs")
        depth = load_field(out / "depth.rfs")
        assert np.all(np.isfinite(vel.easting))
        assert np.all(depth.values >= 0)

    def test_dry_bathy_exits_3(self, workdir):
        grid = make_bend_grid(9, 14, 2.4)
        wall = make_synthetic_truth(grid, bank_elev=29.0, max_depth=3.0).values.copy()
        wall[:, 7] = 50.0
        from riverflow.grid import ScalarField
        p = workdir / "wall.rfs"
        save_field(ScalarField(grid, wall), p, dtype="float64")
        rc = main(["simulate", "--bathy", str(p), "--q", "300", "--zf", "30.5",
                   "--out", str(workdir / "simfail")])
        assert rc == 3


@pytest.fixture(scope="module")
def pipeline_run(workdir):
    cfg = workdir / "mini.config"
    cfg.write_text("""
n_across = 13
n_along = 20
spacing_m = 2.4
beta = 1.0
l_x = 12
l_y = 15
rank_x = 12
rank_y = 8
max_rank = 30
oracle_mode = fixed_stage
n_obs = 50
n_pc = 12
max_gn_iter = 2
n_bathy = 14
bcs_per_bathy = 3
test_bathy = 5
test_bcs_per_bathy = 2
latent_dim = 10
window_span = 8
epochs.linear = 40
epochs.pca_dnn = 40
epochs.se = 15
epochs.sve = 15
epochs.local_linear = 10
epochs.local_se = 6
propagate_n = 8
master_seed = 13
""")
    out = workdir / "run"
    rc = main(["run-pipeline", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    return out


class TestPipelineCLI:
    def test_dry_run_prints_plan_without_writing(self, workdir, capsys):
        cfg = workdir / "dry.config"
        cfg.write_text("n_bathy = 4\nbcs_per_bathy = 2\n")
        rc = main(["run-pipeline", "--config", str(cfg), "--out",
                   str(workdir / "dry"), "--dry-run"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "plan: train" in out and "plan: propagate" in out
        assert not (workdir / "dry").exists()

    def test_missing_config_key_value_exits_2(self, workdir):
        bad = workdir / "bad.config"
        bad.write_text("beta = not_a_number\n")
        rc = main(["run-pipeline", "--config", str(bad), "--out", str(workdir / "x")])
        assert rc == 2

    def test_unknown_key_named_in_error(self, workdir, capsys):
        bad = workdir / "bad2.config"
        bad.write_text("kernel_beta = 1.2\n")
        rc = main(["run-pipeline", "--config", str(bad), "--out", str(workdir / "x")])
        assert rc == 2
        assert "kernel_beta" in capsys.readouterr().err

    def test_artifacts_and_manifest(self, pipeline_run):
        assert (pipeline_run / "metrics.json").exists()
        assert (pipeline_run / "metrics.digest").exists()
        manifest = [json.loads(l) for l in
                    (pipeline_run / "run_manifest.jsonl").read_text().splitlines()]
        assert not any(e.get("stage") == "INCOMPLETE" for e in manifest)
        # every recorded artifact exists and matches its digest
        from riverflow.dataset import file_digest
        for entry in manifest:
            if "path" in entry:
                p = pipeline_run / entry["path"]
                assert p.exists()
                assert file_digest(p) == entry["digest"]

    def test_metrics_structure(self, pipeline_run):
        metrics = json.loads((pipeline_run / "metrics.json").read_text())
        assert set(metrics["global_rmse"]) == {"linear", "pca_dnn", "se", "sve"}
        for variant in metrics["global_rmse"].values():
            assert set(variant) == {"train", "validation", "test"}
        assert "local_rmse" in metrics and "partial_eval" in metrics

    def test_downstream_commands_on_artifacts(self, pipeline_run, workdir, capsys):
        model = pipeline_run / "model_global_pca_dnn.ckpt"
        dataset = pipeline_run / "dataset"
        rc = main(["evaluate", "--model", str(model), "--dataset", str(dataset),
                   "--split", "validation"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["variant"] == "pca_dnn" and np.isfinite(payload["rmse"])

        rc = main(["sensitivity", "--model", str(model), "--dataset", str(dataset),
                   "--split", "validation", "--out", str(workdir / "sens")])
        assert rc == 0
        rc = main(["error-bins", "--model", str(model), "--dataset", str(dataset),
                   "--split", "all", "--out", str(workdir / "bins")])
        assert rc == 0
        rc = main(["partial-eval", "--model", str(model), "--dataset", str(dataset),
                   "--posterior", str(pipeline_run / "posterior.rfg"),
                   "--sections", "0,10,20", "--split", "validation",
                   "--out", str(workdir / "part")])
        assert rc == 0
        rc = main(["propagate", "--model", str(model),
                   "--posterior", str(pipeline_run / "posterior.rfg"),
                   "--q", "400", "--zf", "31.5", "--n", "5", "--seed", "1",
                   "--out", str(workdir / "prop")])
        assert rc == 0
        assert (workdir / "prop" / "ensemble_mean.rfs").exists()

    def test_predict_on_pipeline_model(self, pipeline_run, workdir):
        model = pipeline_run / "model_global_se.ckpt"
        rc = main(["predict", "--model", str(model),
                   "--bathy", str(pipeline_run / "truth_bathy.rfs"),
                   "--q", "300", "--zf", "31.0",
                   "--out", str(workdir / "pred.rfs")])
        assert rc == 0
        pred = load_field(workdir / "pred.rfs")
        assert np.all(np.isfinite(pred.values))

    def test_predict_segment_on_local_model(self, pipeline_run, workdir):
        model = pipeline_run / "model_local_se.ckpt"
        rc = main(["predict-segment", "--model", str(model),
                   "--bathy", str(pipeline_run / "truth_bathy.rfs"),
                   "--q", "300", "--zf", "31.0", "--start", "0", "--length", "12",
                   "--strategy", "dense", "--out", str(workdir / "seg.tsv")])
        assert rc == 0
        seg = np.loadtxt(workdir / "seg.tsv")
        assert seg.shape == (13, 12)
