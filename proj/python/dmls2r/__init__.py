"""Deep metric learning for semi-supervised regression."""

from ._core import (
    BenchConfig,
    Dataset,
    ExperimentSplit,
    NormParams,
    RLLConfig,
    SiameseModel,
    TrainConfig,
    TrainHistory,
    TrainResult,
    alternate_train,
    apply_minmax,
    derive_seed,
    fit_minmax,
    knn_predict,
    load_dataset,
    mae,
    make_split,
    predict,
    predict_batch,
    run_experiment,
)

__all__ = [
    "BenchConfig",
    "Dataset",
    "ExperimentSplit",
    "NormParams",
    "RLLConfig",
    "SiameseModel",
    "TrainConfig",
    "TrainHistory",
    "TrainResult",
    "alternate_train",
    "apply_minmax",
    "derive_seed",
    "fit_minmax",
    "knn_predict",
    "load_dataset",
    "mae",
    "make_split",
    "predict",
    "predict_batch",
    "run_experiment",
]
