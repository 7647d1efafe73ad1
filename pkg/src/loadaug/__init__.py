"""Generative augmentation of small hourly load datasets, tree-ensemble
load forecasting, fidelity diagnostics and PV/grid economic dispatch."""

from .dataset import TimeSeriesDataset, ingest_csv, split_chronological
from .diffusion import DiffusionAugmenter
from .dispatch import DispatchProblem, solve_dispatch, validate_dispatch
from .fidelity import fidelity_report
from .forecast import ExtraTrees, GradientBoostedTrees, RandomForest, benchmark_models
from .pipeline import PipelineConfig, load_config, run_pipeline
from .timegan import TimeGanAugmenter

__version__ = "0.1.0"

__all__ = [
    "DiffusionAugmenter",
    "DispatchProblem",
    "ExtraTrees",
    "GradientBoostedTrees",
    "PipelineConfig",
    "RandomForest",
    "TimeGanAugmenter",
    "TimeSeriesDataset",
    "benchmark_models",
    "fidelity_report",
    "ingest_csv",
    "load_config",
    "run_pipeline",
    "solve_dispatch",
    "split_chronological",
    "validate_dispatch",
]
