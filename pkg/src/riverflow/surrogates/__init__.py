"""Reduced-order surrogate solvers: PCA utilities, model variants,
training, and prediction modes."""

from .models import (
    ArchSpec,
    Normalization,
    SurrogateModel,
    TrainingError,
    TrainSpec,
    load_model,
    save_model,
)
from .pca import (
    PcaBasis,
    RankDeficiencyError,
    fit_pca,
    incremental_fit_pca,
    project,
    reconstruct,
)
from .predict import (
    local_pooled_rmse,
    per_sample_rmse,
    pooled_rmse,
    predict_posterior_ensemble,
    predict_segment,
)
from .training import train_global, train_local
from .windows import LocalWindow, expand_to_windows, window_count, window_starts

__all__ = [
    "ArchSpec", "LocalWindow", "Normalization", "PcaBasis",
    "RankDeficiencyError", "SurrogateModel", "TrainSpec", "TrainingError",
    "expand_to_windows", "fit_pca", "incremental_fit_pca", "load_model",
    "local_pooled_rmse", "per_sample_rmse", "pooled_rmse",
    "predict_posterior_ensemble", "predict_segment", "project", "reconstruct",
    "save_model", "train_global", "train_local", "window_count",
    "window_starts",
]
