"""Tree-ensemble load forecasters and the benchmark harness."""

from .benchmark import (
    DEFAULT_KINDS,
    MODEL_PRESETS,
    EvalReport,
    ReportRow,
    benchmark_models,
    error_metrics,
    fit_model,
    format_metrics,
)
from .ensemble import (
    EnsembleModel,
    ExtraTrees,
    GradientBoostedTrees,
    RandomForest,
    Tree,
    fit_forest,
    fit_gbdt,
    predict_ensemble,
    staged_predict,
    tree_predictions,
)

__all__ = [
    "DEFAULT_KINDS",
    "MODEL_PRESETS",
    "EnsembleModel",
    "EvalReport",
    "ExtraTrees",
    "GradientBoostedTrees",
    "RandomForest",
    "ReportRow",
    "Tree",
    "benchmark_models",
    "error_metrics",
    "fit_forest",
    "fit_gbdt",
    "fit_model",
    "format_metrics",
    "predict_ensemble",
    "staged_predict",
    "tree_predictions",
]
