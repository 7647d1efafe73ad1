"""Error metrics and the train-variant x model-kind benchmark report."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..dataset import TimeSeriesDataset, assert_no_leakage
from .ensemble import fit_forest, fit_gbdt, predict_ensemble

# name -> (fitter, keyword arguments); the two boosting presets stand in for
# the usual shallow-fast and deeper-slower library defaults
MODEL_PRESETS = {
    "extratrees": ("forest", {"kind": "extratrees", "n_estimators": 100}),
    "random_forest": ("forest", {"kind": "random_forest", "n_estimators": 100}),
    "xgboost_like": ("gbdt", {"rounds": 200, "learning_rate": 0.1, "depth": 3}),
    "catboost_like": ("gbdt", {"rounds": 300, "learning_rate": 0.05, "depth": 6}),
}
DEFAULT_KINDS = tuple(MODEL_PRESETS)
SOURCE_LABELS = {
    "original": "original",
    "replicated": "replicated",
    "diffusion": "augmented-diffusion",
    "timegan": "augmented-timegan",
}


def error_metrics(predictions, targets) -> tuple[float, float]:
    """Return ``(rmse, mae)``."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ValueError("predictions and targets differ in length")
    if p.size == 0:
        raise ValueError("cannot score an empty prediction set")
    err = p - y
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def format_metrics(rmse: float, mae: float, digits: int = 5) -> str:
    return f"{rmse:.{digits}f} / {mae:.{digits}f}"


def fit_model(kind: str, X, y, seed: int = 0, **overrides):
    if kind not in MODEL_PRESETS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_PRESETS)}")
    fitter, kwargs = MODEL_PRESETS[kind]
    kwargs = {**kwargs, **overrides}
    if fitter == "forest":
        return fit_forest(X, y, seed=seed, **kwargs)
    return fit_gbdt(X, y, seed=seed, **kwargs)


@dataclass(frozen=True)
class ReportRow:
    model: str
    source: str
    rmse: float
    mae: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def lookup(self, model: str, source: str) -> ReportRow:
        for row in self.rows:
            if row.model == model and row.source == source:
                return row
        raise KeyError((model, source))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "source", "rmse", "mae", "rmse / mae"])
        for r in self.rows:
            w.writerow([r.model, r.source, repr(r.rmse), repr(r.mae), format_metrics(r.rmse, r.mae)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "rows": [{"model": r.model, "source": r.source, "rmse": r.rmse, "mae": r.mae} for r in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls([ReportRow(**r) for r in doc["rows"]], doc["metadata"])

    def write(self, directory, stem: str = "eval_report") -> list:
        from pathlib import Path

        directory = Path(directory)
        paths = [directory / f"{stem}.csv", directory / f"{stem}.json"]
        paths[0].write_text(self.to_csv(), encoding="utf-8")
        paths[1].write_text(self.to_json(), encoding="utf-8")
        return paths


def benchmark_models(
    variants,
    test: TimeSeriesDataset,
    kinds=DEFAULT_KINDS,
    seed: int = 0,
    model_overrides: dict | None = None,
) -> EvalReport:
    """Fit every model kind on every training variant and score each on ``test``.

    Raises :class:`~loadaug.dataset.LeakageError` when any variant contains or
    descends from a test-partition row.
    """
    model_overrides = model_overrides or {}
    for ds in variants:
        stamps = ds.timestamps[~np.isnat(ds.timestamps)]
        assert_no_leakage(np.concatenate([stamps, np.asarray(ds.lineage, dtype="datetime64[h]")]), test, "forecast")
    rows = []
    for kind in kinds:
        for ds in variants:
            model = fit_model(kind, ds.features, ds.target, seed=seed, **model_overrides.get(kind, {}))
            rmse, mae = error_metrics(predict_ensemble(model, test.features), test.target)
            rows.append(ReportRow(kind, SOURCE_LABELS[ds.source], rmse, mae))
    metadata = {
        "seed": int(seed),
        "n_test": len(test),
        "train_sizes": {SOURCE_LABELS[ds.source]: len(ds) for ds in variants},
        "kinds": list(kinds),
    }
    return EvalReport(rows, metadata)
