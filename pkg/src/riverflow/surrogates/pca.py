"""Linear dimension reduction: batch and streaming principal components.

A basis holds the top-L right singular directions of the centered data
matrix as orthonormal rows, plus the centering mean. Projection is
``components @ (x - mean)`` and reconstruction is the transpose map; with
orthonormal rows, project-after-reconstruct is the identity on latent
vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_TOL_REL = 1e-12


class RankDeficiencyError(ValueError):
    """Requested more components than the data can support."""


@dataclass(frozen=True)
class PcaBasis:
    components: np.ndarray = field(repr=False)  # (L, M), orthonormal rows
    mean: np.ndarray = field(repr=False)  # (M,)
    singular_values: np.ndarray = field(repr=False)  # (L,)

    def __post_init__(self):
        c = np.array(self.components, dtype=np.float64)
        m = np.array(self.mean, dtype=np.float64)
        s = np.array(self.singular_values, dtype=np.float64)
        if c.ndim != 2 or m.shape != (c.shape[1],) or s.shape != (c.shape[0],):
            raise ValueError("inconsistent basis shapes")
        gram = c @ c.T
        if np.max(np.abs(gram - np.eye(c.shape[0]))) > 1e-8:
            raise ValueError("component rows are not orthonormal")
        for arr in (c, m, s):
            arr.setflags(write=False)
        object.__setattr__(self, "components", c)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "singular_values", s)

    @property
    def latent_dim(self) -> int:
        return self.components.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.components.shape[1]


def fit_pca(data: np.ndarray, latent_dim: int) -> PcaBasis:
    """Top-L principal directions of (n_samples, M) data.

    Raises :class:`RankDeficiencyError` when the centered data has rank
    below ``latent_dim``; a padded basis is never fabricated.
    """
    data = np.asarray(data, dtype=np.float64)
    n, m = data.shape
    if latent_dim < 1 or latent_dim > min(n, m):
        raise RankDeficiencyError(
            f"latent_dim {latent_dim} outside [1, min(n, M)] = {min(n, m)}"
        )
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[latent_dim - 1] <= RANK_TOL_REL * max(s[0], 1e-300):
        rank = int(np.sum(s > RANK_TOL_REL * max(s[0], 1e-300)))
        raise RankDeficiencyError(
            f"data rank {rank} is below requested latent_dim {latent_dim}"
        )
    return PcaBasis(vt[:latent_dim], mean, s[:latent_dim])


def project(basis: PcaBasis, x: np.ndarray) -> np.ndarray:
    """Latent coordinates of one vector or a (n, M) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != basis.ambient_dim:
        raise ValueError("ambient dimension mismatch")
    return (x - basis.mean) @ basis.components.T


def reconstruct(basis: PcaBasis, z: np.ndarray) -> np.ndarray:
    """Ambient-space representation of latent coordinates."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != basis.latent_dim:
        raise ValueError("latent dimension mismatch")
    return z @ basis.components + basis.mean


def incremental_fit_pca(blocks, latent_dim: int, max_rank: int | None = None) -> PcaBasis:
    """Streaming PCA over an iterable of (block_size, M) arrays.

    Maintains a running mean and an SVD of the centered data, folding each
    block in with the standard mean-correction row. With ``max_rank=None``
    the intermediate factorization keeps full rank (bounded by M), so the
    result matches batch PCA to roundoff; a finite cap trades subspace
    accuracy for memory. The first block must contain at least
    ``latent_dim`` samples.
    """
    comp = None  # (r, M) current right singular directions
    sing = None  # (r,)
    mean = None
    seen = 0

    def truncate(s, vt):
        keep = s.size if max_rank is None else min(max_rank, s.size)
        return s[:keep], vt[:keep]

    for block in blocks:
        block = np.asarray(block, dtype=np.float64)
        if block.ndim != 2:
            raise ValueError("blocks must be 2D")
        nb = block.shape[0]
        if nb == 0:
            continue
        if comp is None:
            if nb < latent_dim:
                raise RankDeficiencyError(
                    f"first block has {nb} samples, need >= {latent_dim}"
                )
            mean = block.mean(axis=0)
            _, s, vt = np.linalg.svd(block - mean, full_matrices=False)
            sing, comp = truncate(s, vt)
            seen = nb
            continue
        new_mean = (seen * mean + nb * block.mean(axis=0)) / (seen + nb)
        # mean shift re-expressed as one extra row of the centered stack
        correction = np.sqrt(seen * nb / (seen + nb)) * (block.mean(axis=0) - mean)
        stack = np.vstack([
            sing[:, None] * comp,
            block - block.mean(axis=0),
            correction[None, :],
        ])
        _, s, vt = np.linalg.svd(stack, full_matrices=False)
        sing, comp = truncate(s, vt)
        mean = new_mean
        seen += nb
    if comp is None:
        raise ValueError("stream contained no data")
    if sing.size < latent_dim:
        raise RankDeficiencyError(
            f"stream rank {sing.size} is below requested latent_dim {latent_dim}"
        )
    if sing[latent_dim - 1] <= RANK_TOL_REL * max(sing[0], 1e-300):
        rank = int(np.sum(sing > RANK_TOL_REL * max(sing[0], 1e-300)))
        raise RankDeficiencyError(
            f"stream rank {rank} is below requested latent_dim {latent_dim}"
        )
    return PcaBasis(comp[:latent_dim], mean, sing[:latent_dim])


def principal_angle(a: PcaBasis, b: PcaBasis) -> float:
    """Largest principal angle [rad] between two bases' row spaces."""
    s = np.linalg.svd(a.components @ b.components.T, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))
