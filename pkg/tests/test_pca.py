import numpy as np
import pytest

from riverflow.surrogates.pca import (
    PcaBasis,
    RankDeficiencyError,
    fit_pca,
    incremental_fit_pca,
    principal_angle,
    project,
    reconstruct,
)


def toy_data(n=30, m=24, seed=0, rank=None):
    rng = np.random.default_rng(seed)
    if rank is None:
        return rng.normal(size=(n, m)) * np.linspace(3, 0.1, m)
    u = rng.normal(size=(n, rank))
    v = rng.normal(size=(rank, m))
    return u @ v


def svd_oracle_rmse(data, latent_dim):
    """Independent dense-SVD reconstruction error (Eckart-Young optimum)."""
    mean = data.mean(axis=0)
    c = data - mean
    u, s, vt = np.linalg.svd(c, full_matrices=False)
    trunc = u[:, :latent_dim] * s[:latent_dim] @ vt[:latent_dim]
    return np.sqrt(np.mean((c - trunc) ** 2))


class TestFit:
    def test_full_rank_round_trip(self):
        data = toy_data(n=12, m=8)
        basis = fit_pca(data, 8)
        rec = reconstruct(basis, project(basis, data))
        assert np.max(np.abs(rec - data)) < 1e-8

    def test_rank_one_dataset_single_component(self):
        rng = np.random.default_rng(5)
        direction = rng.normal(size=10)
        data = np.outer(rng.normal(size=20), direction) + 3.0
        basis = fit_pca(data, 1)
        rec = reconstruct(basis, project(basis, data))
        assert np.max(np.abs(rec - data)) < 1e-10

    def test_reconstruction_rmse_matches_svd_oracle(self):
        data = toy_data(n=30, m=24, seed=3)
        for latent in (1, 5, 10, 20, 24):
            basis = fit_pca(data, latent)
            rec = reconstruct(basis, project(basis, data))
            rmse = np.sqrt(np.mean((rec - data) ** 2))
            assert rmse == pytest.approx(svd_oracle_rmse(data, latent), abs=1e-9)

    def test_monotone_nonincreasing_in_latent_dim(self):
        data = toy_data(n=30, m=24, seed=4)
        errs = []
        for latent in range(1, 25):
            basis = fit_pca(data, latent)
            rec = reconstruct(basis, project(basis, data))
            errs.append(np.sqrt(np.mean((rec - data) ** 2)))
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    def test_rank_deficiency_rejected_not_padded(self):
        data = toy_data(n=30, m=24, seed=6, rank=4)
        with pytest.raises(RankDeficiencyError):
            fit_pca(data, 10)

    def test_latent_exceeding_samples_rejected(self):
        with pytest.raises(RankDeficiencyError):
            fit_pca(toy_data(n=5, m=24), 6)


class TestProjectReconstruct:
    def test_project_mean_is_zero(self):
        data = toy_data(n=15, m=10, seed=7)
        basis = fit_pca(data, 4)
        assert np.max(np.abs(project(basis, basis.mean))) < 1e-12

    def test_project_after_reconstruct_is_identity(self):
        data = toy_data(n=15, m=10, seed=8)
        basis = fit_pca(data, 5)
        rng = np.random.default_rng(9)
        z = rng.normal(size=(6, 5))
        assert np.max(np.abs(project(basis, reconstruct(basis, z)) - z)) < 1e-10

    def test_reconstruction_error_nonincreasing_nested_bases(self):
        data = toy_data(n=20, m=12, seed=10)
        x = data[3]
        errs = [np.linalg.norm(reconstruct(fit_pca(data, L), project(fit_pca(data, L), x)) - x)
                for L in range(1, 13)]
        assert all(b <= a + 1e-10 for a, b in zip(errs, errs[1:]))

    def test_dimension_mismatch_rejected(self):
        basis = fit_pca(toy_data(n=15, m=10), 3)
        with pytest.raises(ValueError):
            project(basis, np.zeros(9))
        with pytest.raises(ValueError):
            reconstruct(basis, np.zeros(4))


class TestIncremental:
    def test_single_block_equals_batch_up_to_sign(self):
        data = toy_data(n=25, m=12, seed=11)
        batch = fit_pca(data, 5)
        inc = incremental_fit_pca([data], 5)
        assert np.array_equal(inc.mean, batch.mean)
        for row_inc, row_batch in zip(inc.components, batch.components):
            same = np.max(np.abs(row_inc - row_batch))
            flipped = np.max(np.abs(row_inc + row_batch))
            assert min(same, flipped) < 1e-8

    def test_two_block_split_close_to_batch(self):
        data = toy_data(n=40, m=16, seed=12)
        batch = fit_pca(data, 6)
        inc = incremental_fit_pca([data[:22], data[22:]], 6)
        rec_b = reconstruct(batch, project(batch, data))
        rec_i = reconstruct(inc, project(inc, data))
        rmse_b = np.sqrt(np.mean((rec_b - data) ** 2))
        rmse_i = np.sqrt(np.mean((rec_i - data) ** 2))
        assert rmse_i <= 1.01 * rmse_b + 1e-12
        assert principal_angle(inc, batch) < 1e-3

    def test_many_blocks_subspace_angle_small(self):
        data = toy_data(n=200, m=20, seed=13)
        batch = fit_pca(data, 5)
        inc = incremental_fit_pca([data[i:i + 25] for i in range(0, 200, 25)], 5)
        assert principal_angle(inc, batch) < 1e-3

    def test_mean_tracked_exactly(self):
        data = toy_data(n=60, m=9, seed=14)
        inc = incremental_fit_pca([data[:20], data[20:45], data[45:]], 4)
        assert np.max(np.abs(inc.mean - data.mean(axis=0))) < 1e-10

    def test_identical_vectors_rejected(self):
        data = np.tile(np.arange(8.0), (30, 1))
        with pytest.raises(RankDeficiencyError):
            incremental_fit_pca([data[:15], data[15:]], 2)

    def test_small_first_block_rejected(self):
        data = toy_data(n=30, m=10, seed=15)
        with pytest.raises(RankDeficiencyError):
            incremental_fit_pca([data[:3], data[3:]], 5)


class TestBasisContract:
    def test_rows_orthonormal_enforced(self):
        with pytest.raises(ValueError):
            PcaBasis(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2), np.ones(2))

    def test_read_only(self):
        basis = fit_pca(toy_data(n=15, m=10), 3)
        with pytest.raises(ValueError):
            basis.components[0, 0] = 5.0
