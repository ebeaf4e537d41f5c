"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. The desk-scale pipeline criteria share a single session
run of configs/desk.config; the determinism criterion performs a second
run and compares metrics digests.

Run with ``pytest tests/test_acceptance.py -v -s`` (the full pipeline
executes twice; expect several minutes).
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from riverflow.geostat import LowRankGaussian, SeparableKernel, build_separable_factors
from riverflow.grid import BoundaryCondition, ScalarField, VectorField, make_bend_grid
from riverflow.inversion import InversionConfig, invert
from riverflow.oracle import (
    ObservationSet,
    OracleConfig,
    make_synthetic_truth,
    section_discharges,
    solve_steady,
)
from riverflow.pipeline import PipelineRun, parse_config
from riverflow.scenario import default_curve
from riverflow.seeding import make_rng
from riverflow.surrogates import load_model, predict_posterior_ensemble

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.config"


def report(criterion: int, passed: bool, detail: str):
    print(f"\n[criterion {criterion:2d}] {'PASS' if passed else 'FAIL'}: {detail}")
    assert passed, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk") / "run"
    cfg = parse_config(CONFIG)
    PipelineRun(cfg, out, log=lambda *a: None).run()
    return out


@pytest.fixture(scope="session")
def desk_metrics(desk_run):
    return json.loads((desk_run / "metrics.json").read_text())


class TestCriterion1PcaCorrectness:
    def test_reconstruction_matches_svd_oracle_and_is_monotone(self):
        from riverflow.surrogates import fit_pca, project, reconstruct

        t0 = time.time()
        rng = np.random.default_rng(30)
        data = rng.normal(size=(30, 48)) * np.linspace(4.0, 0.05, 48)
        mean = data.mean(axis=0)
        centered = data - mean
        _, s_oracle, vt_oracle = np.linalg.svd(centered, full_matrices=False)
        errs = []
        worst_gap = 0.0
        for latent in range(1, 31):
            basis = fit_pca(data, latent)
            rec = reconstruct(basis, project(basis, data))
            rmse = np.sqrt(np.mean((rec - data) ** 2))
            trunc = centered @ vt_oracle[:latent].T @ vt_oracle[:latent]
            oracle = np.sqrt(np.mean((trunc - centered) ** 2))
            worst_gap = max(worst_gap, abs(rmse - oracle))
            errs.append(rmse)
        monotone = all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
        elapsed = time.time() - t0
        report(1, worst_gap < 1e-9 and monotone and elapsed < 5.0,
               f"oracle gap {worst_gap:.2e}, monotone={monotone}, {elapsed:.2f}s")


class TestCriterion2GradientIntegrity:
    def _gradcheck_full_loss(self, variant):
        from riverflow.nn.gradcheck import max_relative_error
        from riverflow.surrogates.models import ArchSpec, Normalization, TrainSpec
        from riverflow.surrogates.training import _Trainer, _build_model

        rng = np.random.default_rng(11)
        latent = 4
        norm = Normalization(np.zeros(latent), np.ones(latent), np.zeros(2),
                             np.ones(2), np.zeros(latent), np.ones(latent))
        arch = ArchSpec(dnn_hidden=(6,), conv_channels=(2, 3))
        spec = TrainSpec(epochs=1, seed=2, l2_coeff=0.01, kl_weight=0.05)
        if variant in ("se", "sve"):
            grid_shape = (6, 8)
            norm = Normalization(np.zeros(1), np.ones(1), np.zeros(2), np.ones(2),
                                 np.zeros(1), np.ones(1))
            model = _build_model(variant, "global", "magnitude", latent, grid_shape,
                                 1.0, None, arch, spec, norm, None, None)
            xb = rng.normal(size=(3, 1, 6, 8))
            yb = rng.normal(size=(3, 48))
        else:
            model = _build_model(variant, "global", "magnitude", latent, (6, 8),
                                 1.0, None, arch, spec, norm, None, None)
            xb = rng.normal(size=(3, latent))
            yb = rng.normal(size=(3, latent))
        bcb = rng.normal(size=(3, 2))
        trainer = _Trainer(model, spec)
        trainer._dec_out_shape = (1, 6, 8)
        if model.sampler is not None:
            model.sampler.freeze_noise = True

        def loss_fn():
            return trainer._batch_loss(xb, bcb, yb, train=True)

        loss_fn()  # draw and freeze any sampling noise
        return max_relative_error(loss_fn, model.modules(), probes=40,
                                  rng=np.random.default_rng(3))

    def test_layer_kinds_and_full_losses(self):
        from riverflow.nn import (Activation, BatchNorm, Conv2D, ConvTranspose2D,
                                  Dense, Flatten, Sequential)
        from riverflow.nn.gradcheck import max_relative_error
        from riverflow.nn.losses import mse_loss

        t0 = time.time()
        rng = np.random.default_rng(5)
        worst = {}

        def seq_case(name, net, x, t):
            def fn():
                net.zero_grads()
                pred = net.forward(x, train=True)
                loss, grad = mse_loss(pred, t)
                net.backward(grad)
                return loss
            worst[name] = max_relative_error(fn, [net])

        seq_case("dense", Sequential([Dense(5, 7, rng), Activation("tanh"),
                                      Dense(7, 3, rng)]),
                 rng.normal(size=(4, 5)), rng.normal(size=(4, 3)))
        seq_case("conv2d", Sequential([Conv2D(2, 3, 3, 2, rng), Activation("tanh"),
                                       Flatten()]),
                 rng.normal(size=(2, 2, 7, 6)), rng.normal(size=(2, 3 * 4 * 3)))
        seq_case("conv_transpose", Sequential([ConvTranspose2D(2, 2, 3, 2, (7, 6), rng),
                                               Flatten()]),
                 rng.normal(size=(2, 2, 4, 3)), rng.normal(size=(2, 2 * 7 * 6)))
        seq_case("batchnorm", Sequential([Dense(5, 6, rng), BatchNorm(6),
                                          Activation("tanh"), Dense(6, 2, rng)]),
                 rng.normal(size=(6, 5)), rng.normal(size=(6, 2)))
        for variant in ("pca_dnn", "linear", "se", "sve"):
            worst[f"loss_{variant}"] = self._gradcheck_full_loss(variant)
        elapsed = time.time() - t0
        worst_err = max(worst.values())
        report(2, worst_err < 1e-4 and elapsed < 60.0,
               f"max relative error {worst_err:.2e} over {sorted(worst)}, "
               f"{elapsed:.1f}s")


class TestCriterion3OracleConservation:
    def test_mass_conservation_on_100_random_pairs(self):
        t0 = time.time()
        grid = make_bend_grid(41, 64, 2.4)
        truth = make_synthetic_truth(grid)
        kernel = SeparableKernel(beta=1.2, l_x=15.0, l_y=29.0)
        base = build_separable_factors(kernel, grid, 60, 20, 100)
        gauss = LowRankGaussian(truth, base.factor)
        curve = default_curve()
        cfg = OracleConfig(mode="backwater")
        rng = make_rng(77)
        worst = 0.0
        from riverflow.geostat import sample_field
        for i in range(100):
            bathy = sample_field(gauss, seed=1000 + i)
            q = float(rng.uniform(curve.q_min, curve.q_max))
            bc = BoundaryCondition(q, float(curve.stage(q)))
            vel, depth = solve_steady(bathy, bc, cfg)
            qsec = section_discharges(vel, depth)
            worst = max(worst, float(np.max(np.abs(qsec / q - 1.0))))
        elapsed = time.time() - t0
        report(3, worst < 1e-3 and elapsed < 30.0,
               f"worst section-discharge deviation {worst:.2e}, {elapsed:.1f}s")


class TestCriterion4MethodOrdering:
    def test_se_beats_linear_and_stays_near_best(self, desk_metrics):
        table = desk_metrics["global_rmse"]
        se = table["se"]["test"]
        lin = table["linear"]["test"]
        best = min(v["test"] for v in table.values())
        ok = se < lin and se <= 1.05 * best
        report(4, ok,
               f"test RMSE: se={se:.4f} linear={lin:.4f} "
               f"pca_dnn={table['pca_dnn']['test']:.4f} "
               f"sve={table['sve']['test']:.4f}; se<=1.05*min({best:.4f})")


class TestCriterion5LocalLinearCollapse:
    def test_local_linear_at_least_2x_local_se(self, desk_metrics):
        local = desk_metrics["local_rmse"]
        lin, se = local["linear"]["test"], local["se"]["test"]
        report(5, lin >= 2.0 * se,
               f"local test RMSE: linear={lin:.4f} vs se={se:.4f} "
               f"(ratio {lin / se:.2f}x)")


class TestCriterion6SensitivityDecay:
    def test_last_components_matter_less(self, desk_metrics):
        sens = desk_metrics["sensitivity"]
        detail = []
        ok = True
        for variant, per_tag in sorted(sens.items()):
            first5 = per_tag["test"]["first5_mean"]
            last10 = per_tag["test"]["last10_mean"]
            good = last10 < 0.1 * first5
            ok = ok and good
            detail.append(f"{variant}: last10/first5={last10 / first5:.3f}")
        report(6, ok, "; ".join(detail))


class TestCriterion7PartialMeasurementLimits:
    def test_limits_and_improvement(self, desk_metrics):
        part = desk_metrics["partial_eval"]["rmse"]
        table = desk_metrics["global_rmse"]
        n_along = max(int(s) for s in next(iter(part.values())).keys())
        detail = []
        ok = True
        for variant, res in sorted(part.items()):
            r0, rfull = res["0"], res[str(n_along)]
            full_test = table[variant]["test"]
            bit_exact = rfull == full_test
            drop = (r0 - rfull) / r0 if r0 > 0 else 0.0
            good = (r0 >= rfull) and bit_exact and drop >= 0.25
            ok = ok and good
            detail.append(f"{variant}: S0={r0:.4f} Sfull={rfull:.4f} "
                          f"drop={drop:.0%} exact={bit_exact}")
        report(7, ok, "; ".join(detail))


class TestCriterion8PosteriorPropagation:
    def test_ensemble_mean_close_to_oracle_ensemble(self, desk_metrics):
        prop = desk_metrics["propagate"]["by_variant"]
        table = desk_metrics["global_rmse"]
        detail = []
        ok = True
        for variant, res in sorted(prop.items()):
            bound = 2.0 * table[variant]["test"]
            good = res["mean_rmse_vs_oracle"] <= bound and res["std_min"] >= 0.0
            ok = ok and good
            detail.append(f"{variant}: ens-mean rmse {res['mean_rmse_vs_oracle']:.4f} "
                          f"<= {bound:.4f}")
        report(8, ok, "; ".join(detail))

    def test_zero_variance_posterior_gives_zero_std(self, desk_run):
        model = load_model(desk_run / "model_global_se.ckpt")
        grid = make_bend_grid(model.n_across, model.n_along, model.spacing_m)
        mean = make_synthetic_truth(grid)
        posterior = LowRankGaussian(mean, np.zeros((grid.n_nodes, 1)))
        q = 400.0
        bc = BoundaryCondition(q, float(default_curve().stage(q)))
        _, std = predict_posterior_ensemble(model, posterior, bc, n=5, seed=1)
        report(8, bool(np.all(std.values == 0.0)),
               "degenerate posterior propagates to exactly zero spread")


class TestCriterion9InversionSanity:
    def test_gls_match_and_variance_reduction(self):
        grid = make_bend_grid(5, 7, 2.0)
        kernel = SeparableKernel(beta=1.0, l_x=8.0, l_y=5.0)
        base = build_separable_factors(kernel, grid, 7, 5, 12)
        prior = LowRankGaussian(ScalarField(grid, np.full((5, 7), 26.0)), base.factor)
        rng = np.random.default_rng(2)
        amat = rng.normal(size=(grid.n_nodes, grid.n_nodes)) / np.sqrt(grid.n_nodes)
        truth_c = rng.normal(size=prior.rank)
        truth = prior.mean.to_vector() + prior.factor @ truth_c
        locs = np.sort(rng.choice(grid.n_nodes, size=30, replace=False))
        clean = amat @ truth
        sigma = 1e-3
        obs = ObservationSet(locs, clean[locs], np.zeros(30), noise_sigma=sigma)

        def forward(bathy, bc):
            v = amat @ bathy.to_vector()
            return VectorField(grid, grid.from_vector(v), np.zeros((5, 7)))

        res = invert(obs, BoundaryCondition(100.0, 30.0), prior,
                     InversionConfig(n_pc=prior.rank, obs_noise_sigma=sigma,
                                     max_gn_iter=4), forward=forward)
        h_east = amat[locs, :] @ prior.factor
        h = np.vstack([h_east, np.zeros_like(h_east)])
        y = obs.stacked() - np.concatenate([amat[locs, :] @ prior.mean.to_vector(),
                                            np.zeros(len(locs))])
        lhs = h.T @ h / sigma**2 + np.eye(prior.rank)
        c_want = np.linalg.solve(lhs, h.T @ y / sigma**2)
        mean_want = prior.mean.to_vector() + prior.factor @ c_want
        gap = float(np.max(np.abs(res.posterior.mean.to_vector() - mean_want)))
        var_ok = bool(np.all(np.diag(res.coeff_cov) <= 1.0 + 1e-12))
        report(9, gap < 1e-6 and var_ok,
               f"GLS gap {gap:.2e}; posterior variances <= prior: {var_ok}")


class TestCriterion10Determinism:
    def test_pipeline_rerun_reproduces_metrics_digest(self, desk_run, tmp_path_factory):
        first = (desk_run / "metrics.digest").read_text().strip()
        out2 = tmp_path_factory.mktemp("desk_rerun") / "run"
        cfg = parse_config(CONFIG)
        PipelineRun(cfg, out2, log=lambda *a: None).run()
        second = (out2 / "metrics.digest").read_text().strip()
        report(10, first == second,
               f"metrics digests {'match' if first == second else 'differ'}: "
               f"{first[:16]}... vs {second[:16]}...")
