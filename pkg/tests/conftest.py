import numpy as np
import pytest

from riverflow.dataset import build_dataset
from riverflow.grid import ScalarField, make_bend_grid
from riverflow.oracle import OracleConfig, make_synthetic_truth
from riverflow.scenario import StageDischargeCurve
from riverflow.seeding import make_rng


@pytest.fixture(scope="session")
def small_curve():
    return StageDischargeCurve(a=-6e-6, b=0.0128, c=28.45, q_min=85.0, q_max=840.0)


@pytest.fixture(scope="session")
def small_samples(tmp_path_factory, small_curve):
    """Shared 60-sample dataset on a 13x20 grid (20 distinct bathymetries)."""
    grid = make_bend_grid(13, 20, 2.4)
    truth = make_synthetic_truth(grid, bank_elev=29.0, max_depth=3.5)
    rng = make_rng(99)
    taper = np.sin(np.pi * np.arange(13) / 12)[:, None]
    bathys = [
        ScalarField(grid, truth.values + taper * rng.normal(0, 0.5, truth.values.shape))
        for _ in range(20)
    ]
    root = tmp_path_factory.mktemp("samples")
    return build_dataset(bathys, small_curve, 3, OracleConfig(mode="fixed_stage"),
                         seed=11, out_dir=root, validation_fraction=0.15)
