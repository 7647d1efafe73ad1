"""Pipeline configuration and stages.

Each stage reads the artifacts of earlier stages from the output directory
and writes its own, so any stage can be rerun on its own:

    data/        original, train and test CSVs, normalization, split record
    augment/     replicated rows, generated rows and their lineage
    checkpoints/ augmenter and dispatch forecaster
    reports/     benchmark report (CSV and JSON)
    fidelity/    statistics table, PCA and KDE plots
    dispatch/    next-day forecast, schedule, summary and plot

Stage seeds are derived from the master seed and the stage name, so adding
or skipping a stage does not change the randomness of the others.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .checkpoint import load_model, save_model
from .dataset import (
    FEATURE_COLUMNS,
    DataError,
    TimeSeriesDataset,
    assert_no_leakage,
    fit_apply_normalizer,
    ingest_csv,
    make_windows,
    read_dataset_csv,
    replicate_rows,
    split_chronological,
)
from .diffusion import DiffusionTrainConfig, generate_rows, train_diffusion
from .dispatch import DispatchProblem, clamp_load, read_problem_csv, solve_dispatch, write_dispatch
from .fidelity import fidelity_report
from .forecast import DEFAULT_KINDS, MODEL_PRESETS, benchmark_models, fit_model, predict_ensemble
from .numerics import derive_seed
from .timegan import TimeGanTrainConfig, generate_rows_gan, train_timegan

log = logging.getLogger(__name__)

AUGMENTERS = ("diffusion", "timegan", "replicate")
STAGES = ("ingest", "augment", "evaluate", "diagnose", "train-forecaster", "dispatch")
LOCK_NAME = ".loadaug.lock"
MANIFEST_NAME = "manifest.json"


class ConfigError(ValueError):
    """Invalid configuration or command-line usage."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


# ---------------------------------------------------------------- configuration


@dataclass
class DataSection:
    input_csv: str = "household_standin.csv"
    next_day_csv: str = "next_day_features.csv"
    train_fraction: float = 0.8
    window_length: int = 24
    stride: int = 1


@dataclass
class AugmentSection:
    kind: str = "diffusion"
    n_windows: int = 144
    diffusion: dict = field(default_factory=dict)
    timegan: dict = field(default_factory=dict)


@dataclass
class ForecastSection:
    kinds: list = field(default_factory=lambda: list(DEFAULT_KINDS))
    overrides: dict = field(default_factory=dict)
    dispatch_model: str = "extratrees"
    dispatch_source: str = "augmented"


@dataclass
class DispatchSection:
    cost_grid: float = 1.0
    cost_pv: float = 0.4
    # PV availability is capacity * GHI / 1000 W/m^2
    pv_capacity_kw: float = 0.1


@dataclass
class PipelineConfig:
    data: DataSection = field(default_factory=DataSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    forecast: ForecastSection = field(default_factory=ForecastSection)
    dispatch: DispatchSection = field(default_factory=DispatchSection)
    out: str = "loadaug-run"
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        d, a, f, p = self.data, self.augment, self.forecast, self.dispatch
        if not 0 < d.train_fraction < 1:
            raise ConfigError("data.train_fraction must lie in (0, 1)")
        if d.window_length < 1 or d.stride < 1:
            raise ConfigError("data.window_length and data.stride must be >= 1")
        if a.kind not in AUGMENTERS:
            raise ConfigError(f"augment.kind must be one of {AUGMENTERS}")
        if a.n_windows < 0:
            raise ConfigError("augment.n_windows must be >= 0")
        bad = [k for k in f.kinds if k not in MODEL_PRESETS]
        if bad or not f.kinds:
            raise ConfigError(f"forecast.kinds must be a non-empty subset of {sorted(MODEL_PRESETS)}")
        if f.dispatch_model not in MODEL_PRESETS:
            raise ConfigError(f"forecast.dispatch_model must be one of {sorted(MODEL_PRESETS)}")
        if f.dispatch_source not in ("original", "replicated", "augmented"):
            raise ConfigError("forecast.dispatch_source must be original, replicated or augmented")
        if min(p.cost_grid, p.cost_pv, p.pv_capacity_kw) < 0:
            raise ConfigError("dispatch costs and capacity must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            self.diffusion_config(0)
            self.timegan_config(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"augmenter settings: {exc}") from exc
        return self

    def diffusion_config(self, seed: int) -> DiffusionTrainConfig:
        return DiffusionTrainConfig(**{**self.augment.diffusion, "seed": seed})

    def timegan_config(self, seed: int) -> TimeGanTrainConfig:
        return TimeGanTrainConfig(**{**self.augment.timegan, "seed": seed})

    def stage_seed(self, stage: str) -> int:
        return derive_seed(int(self.seed), stage)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "PipelineConfig":
        sections = {"data": DataSection, "augment": AugmentSection, "forecast": ForecastSection, "dispatch": DispatchSection}
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs = {}
        for name, value in doc.items():
            if name in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {name!r} must be an object")
                allowed = {f.name for f in fields(sections[name])}
                extra = set(value) - allowed
                if extra:
                    raise ConfigError(f"unknown key(s) in {name!r}: {sorted(extra)}")
                kwargs[name] = sections[name](**value)
            else:
                kwargs[name] = value
        cfg = cls(**kwargs)
        if base_dir is not None:
            cfg.data.input_csv = str(Path(base_dir, cfg.data.input_csv))
            cfg.data.next_day_csv = str(Path(base_dir, cfg.data.next_day_csv))
        return cfg


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("loadaug") / "data" / name))


def load_config(path=None) -> PipelineConfig:
    """Read a JSON config; relative data paths resolve against its folder.
    Without a path the bundled sample config is used."""
    path = bundled_path("sample_config.json") if path is None else Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return PipelineConfig.from_dict(doc, base_dir=path.parent)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- output directory


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"{out} is in use by another run (remove {lock} if that run died)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path) -> Path:
    """List every file under ``out`` with size and SHA-256."""
    entries = []
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out).as_posix()
        if not p.is_file() or rel in (MANIFEST_NAME, LOCK_NAME):
            continue
        entries.append({"path": rel, "bytes": p.stat().st_size, "sha256": sha256_file(p)})
    report = out / "reports" / "eval_report.json"
    summary = {
        "benchmark_rows": len(json.loads(report.read_text())["rows"]) if report.exists() else 0,
        "plots": sum(e["path"].endswith(".svg") for e in entries),
        "dispatch_schedules": sum(e["path"].endswith("_schedule.csv") for e in entries),
        "checkpoints": sum(e["path"].endswith(".ckpt") for e in entries),
    }
    path = out / MANIFEST_NAME
    path.write_text(json.dumps({"files": entries, "summary": summary}, indent=2) + "\n", encoding="utf-8")
    return path


def verify_manifest(out) -> list[str]:
    """Paths whose size or checksum no longer matches the manifest."""
    out = Path(out)
    doc = json.loads((out / MANIFEST_NAME).read_text())
    bad = []
    for e in doc["files"]:
        p = out / e["path"]
        if not p.is_file() or p.stat().st_size != e["bytes"] or sha256_file(p) != e["sha256"]:
            bad.append(e["path"])
    return bad


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the '{stage}' stage first")
    return path


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _stamps(values) -> list[str]:
    return [str(t) for t in np.asarray(values, dtype="datetime64[h]")]


def _holdout(out: Path) -> np.ndarray:
    split = json.loads(_need(out / "data" / "split.json", "ingest").read_text())
    return np.array(split["test_timestamps"], dtype="datetime64[h]")


def _train(out: Path) -> TimeSeriesDataset:
    return read_dataset_csv(_need(out / "data" / "train.csv", "ingest"))


# ---------------------------------------------------------------- stages


def stage_ingest(cfg: PipelineConfig, out: Path) -> list[Path]:
    ds = ingest_csv(cfg.data.input_csv)
    train, test = split_chronological(ds, cfg.data.train_fraction)
    _, params = fit_apply_normalizer(train)
    d = out / "data"
    d.mkdir(parents=True, exist_ok=True)
    ds.to_csv(d / "original.csv")
    train.to_csv(d / "train.csv")
    test.to_csv(d / "test.csv")
    files = [d / "original.csv", d / "train.csv", d / "test.csv"]
    files.append(_write_json(d / "normalization.json", params.to_dict()))
    split = {"n_rows": len(ds), "n_train": len(train), "n_test": len(test), "test_timestamps": _stamps(test.timestamps)}
    files.append(_write_json(d / "split.json", split))
    log.info("ingest: %d rows -> %d train / %d test", len(ds), len(train), len(test))
    return files


def stage_augment(cfg: PipelineConfig, out: Path) -> list[Path]:
    train = _train(out)
    holdout = _holdout(out)
    # the generator must only ever see training rows
    assert_no_leakage(train.timestamps, holdout, "augment")
    seed = cfg.stage_seed("augment")
    L = cfg.data.window_length
    target = cfg.augment.n_windows * L
    a = out / "augment"
    a.mkdir(parents=True, exist_ok=True)
    replicated = replicate_rows(train, max(target, len(train)))
    replicated.to_csv(a / "replicated.csv")
    files = [a / "replicated.csv"]
    kind = cfg.augment.kind
    if kind == "replicate":
        for stale in (a / "augmented.csv", a / "augmented.json", out / "checkpoints" / "augmenter.ckpt"):
            stale.unlink(missing_ok=True)
        return files

    normalized, params = fit_apply_normalizer(train)
    windows = make_windows(normalized, L, cfg.data.stride, normalized=True)
    ck = out / "checkpoints"
    ck.mkdir(parents=True, exist_ok=True)
    extra = {"normalization": params.to_dict(), "lineage": _stamps(train.lineage)}
    if kind == "diffusion":
        model, sched, history = train_diffusion(windows, cfg.diffusion_config(derive_seed(seed, "train")))
        rows = generate_rows(model, sched, cfg.augment.n_windows, params, derive_seed(seed, "generate"), train.lineage)
        files.append(save_model(model, ck / "augmenter.ckpt", schedule=sched, seed=derive_seed(seed, "train"), extra=extra))
        final_loss = history[-1] if history else None
    else:
        model, history = train_timegan(windows, cfg.timegan_config(derive_seed(seed, "train")))
        rows = generate_rows_gan(model, cfg.augment.n_windows, params, derive_seed(seed, "generate"), L, train.lineage)
        files.append(save_model(model, ck / "augmenter.ckpt", seed=derive_seed(seed, "train"), extra=extra))
        final_loss = {k: (v[-1] if v else None) for k, v in history.items()}
    rows.to_csv(a / "augmented.csv")
    files.append(a / "augmented.csv")
    meta = {"source": rows.source, "rows": len(rows), "lineage": _stamps(rows.lineage), "final_loss": final_loss}
    files.append(_write_json(a / "augmented.json", meta))
    log.info("augment: %s generated %d rows", kind, len(rows))
    return files


def _augmented(out: Path, cfg: PipelineConfig):
    """The generated rows with their lineage restored, or None."""
    path = out / "augment" / "augmented.csv"
    if cfg.augment.kind == "replicate":
        return None
    _need(path, "augment")
    meta = json.loads(_need(out / "augment" / "augmented.json", "augment").read_text())
    ds = read_dataset_csv(path)
    return TimeSeriesDataset(ds.timestamps, ds.values, ds.source, np.array(meta["lineage"], dtype="datetime64[h]"))


def _variants(cfg: PipelineConfig, out: Path) -> dict:
    variants = {
        "original": _train(out),
        "replicated": read_dataset_csv(_need(out / "augment" / "replicated.csv", "augment")),
    }
    aug = _augmented(out, cfg)
    if aug is not None:
        variants["augmented"] = aug
    return variants


def stage_evaluate(cfg: PipelineConfig, out: Path) -> list[Path]:
    variants = _variants(cfg, out)
    test = ingest_csv(_need(out / "data" / "test.csv", "ingest"))
    report = benchmark_models(list(variants.values()), test, cfg.forecast.kinds, cfg.stage_seed("evaluate"), cfg.forecast.overrides)
    r = out / "reports"
    r.mkdir(parents=True, exist_ok=True)
    files = report.write(r)
    for row in report.rows:
        log.info("evaluate: %-14s %-20s rmse %.5f mae %.5f", row.model, row.source, row.rmse, row.mae)
    return files


def stage_diagnose(cfg: PipelineConfig, out: Path) -> list[Path]:
    variants = _variants(cfg, out)
    generated = variants.get("augmented", variants["replicated"])
    rep = fidelity_report(variants["original"], [generated], out / "fidelity")
    return list(rep.files)


def stage_train_forecaster(cfg: PipelineConfig, out: Path) -> list[Path]:
    variants = _variants(cfg, out)
    source = cfg.forecast.dispatch_source
    if source == "augmented" and source not in variants:
        source = "replicated"
    ds = variants[source]
    kind = cfg.forecast.dispatch_model
    model = fit_model(kind, ds.features, ds.target, cfg.stage_seed("train-forecaster"), **cfg.forecast.overrides.get(kind, {}))
    ck = out / "checkpoints"
    ck.mkdir(parents=True, exist_ok=True)
    extra = {"model": kind, "training_source": ds.source, "training_rows": len(ds)}
    return [save_model(model, ck / "forecaster.ckpt", seed=cfg.stage_seed("train-forecaster"), extra=extra)]


def read_next_day(path) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps and weather features of the day to dispatch."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in ("timestamp", *FEATURE_COLUMNS) if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    if len(frame) == 0:
        raise DataError(f"{path}: no rows")
    try:
        feats = frame[list(FEATURE_COLUMNS)].astype(np.float64).to_numpy()
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(feats)):
        raise DataError(f"{path}: non-finite feature values")
    ts = pd.to_datetime(frame["timestamp"].str.strip()).to_numpy().astype("datetime64[h]")
    order = np.argsort(ts, kind="stable")
    return ts[order], feats[order]


def stage_dispatch(cfg: PipelineConfig, out: Path, problem_csv=None) -> list[Path]:
    d = out / "dispatch"
    d.mkdir(parents=True, exist_ok=True)
    p = cfg.dispatch
    if problem_csv is not None:
        problem = read_problem_csv(problem_csv, p.cost_grid, p.cost_pv)
        files = []
    else:
        loaded = load_model(_need(out / "checkpoints" / "forecaster.ckpt", "train-forecaster"))
        ts, feats = read_next_day(cfg.data.next_day_csv)
        forecast = predict_ensemble(loaded.model, feats)
        ghi = feats[:, FEATURE_COLUMNS.index("ghi")]
        pv_max = p.pv_capacity_kw * np.clip(ghi, 0.0, None) / 1000.0
        frame = pd.DataFrame({"hour": np.arange(len(ts)), "timestamp": _stamps(ts), "load_kw": forecast, "pv_max_kw": pv_max})
        frame.to_csv(d / "forecast.csv", index=False, float_format="%.17g", lineterminator="\n")
        files = [d / "forecast.csv"]
        problem = DispatchProblem(clamp_load(forecast), pv_max, p.cost_grid, p.cost_pv)
    sol = solve_dispatch(problem)
    files += write_dispatch(problem, sol, d)
    log.info("dispatch: total cost %.4f over %d h", sol.total_cost, problem.horizon)
    return files


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "augment": stage_augment,
    "evaluate": stage_evaluate,
    "diagnose": stage_diagnose,
    "train-forecaster": stage_train_forecaster,
    "dispatch": stage_dispatch,
}


def run_stage(name: str, cfg: PipelineConfig, out: Path, **kwargs) -> list[Path]:
    try:
        return STAGE_FUNCS[name](cfg, out, **kwargs)
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def echo_config(cfg: PipelineConfig, out: Path) -> Path:
    return _write_json(out / "config.json", cfg.to_dict())


def run_pipeline(cfg: PipelineConfig, stages=STAGES) -> dict:
    """Run ``stages`` in order under the output-directory lock and write the
    manifest. Returns the manifest document."""
    cfg.validate()
    out = Path(cfg.out)
    with output_lock(out):
        echo_config(cfg, out)
        for name in stages:
            run_stage(name, cfg, out)
        path = write_manifest(out)
    return json.loads(path.read_text())

