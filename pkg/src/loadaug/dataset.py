"""Hourly household load/weather data: ingest, normalization, splits, windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

COLUMNS = (
    "timestamp",
    "temperature",
    "pressure",
    "wind_speed",
    "wind_direction",
    "ghi",
    "dni",
    "dhi",
    "load",
)
VALUE_COLUMNS = COLUMNS[1:]
FEATURE_COLUMNS = VALUE_COLUMNS[:-1]
TARGET_COLUMN = "load"
SOURCES = ("original", "replicated", "diffusion", "timegan")

_HOUR = np.timedelta64(1, "h")


class DataError(ValueError):
    """Malformed input data. ``row`` is the 1-based line number in the file
    (header is line 1) when the problem can be pinned to a row."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"line {row}: {message}")


class LeakageError(RuntimeError):
    """Test-partition rows reached a training or augmentation stage."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Rows of 7 weather features plus load.

    ``timestamps`` is ``datetime64[h]``; generated rows carry ``NaT``.
    ``lineage`` holds the timestamps of the original rows this data was
    derived from (for generated data: the rows the generator was trained on)
    and is what the leakage guard inspects.
    """

    timestamps: np.ndarray
    values: np.ndarray
    source: str = "original"
    lineage: np.ndarray = field(default=None)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[h]")
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1, len(VALUE_COLUMNS))
        if ts.shape[0] != vals.shape[0]:
            raise ValueError("timestamps and values differ in length")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        lineage = ts[~np.isnat(ts)] if self.lineage is None else self.lineage
        lineage = np.unique(np.asarray(lineage, dtype="datetime64[h]"))
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "lineage", _frozen(lineage))

    def __len__(self):
        return self.values.shape[0]

    @property
    def features(self) -> np.ndarray:
        return self.values[:, :-1]

    @property
    def target(self) -> np.ndarray:
        return self.values[:, -1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, VALUE_COLUMNS.index(name)]

    def take(self, idx) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.timestamps[idx], self.values[idx], self.source)

    def equals(self, other: "TimeSeriesDataset") -> bool:
        return (
            self.source == other.source
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    def to_frame(self) -> pd.DataFrame:
        ts = [
            "" if np.isnat(t) else pd.Timestamp(t).strftime("%Y-%m-%dT%H:%M:%S")
            for t in self.timestamps
        ]
        frame = pd.DataFrame(self.values, columns=list(VALUE_COLUMNS))
        frame.insert(0, "timestamp", ts)
        frame["source"] = self.source
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# ---------------------------------------------------------------- ingest


def _parse_frame(frame: pd.DataFrame, require_hourly: bool) -> tuple[np.ndarray, np.ndarray]:
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    if len(frame) == 0:
        raise DataError("file has a header but no rows")

    values = np.empty((len(frame), len(VALUE_COLUMNS)))
    for j, name in enumerate(VALUE_COLUMNS):
        for i, cell in enumerate(frame[name]):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataError(f"unparsable {name} value {cell!r}", row=i + 2)
            values[i, j] = v

    raw_ts = frame["timestamp"].fillna("").str.strip()
    ts = pd.to_datetime(raw_ts.where(raw_ts != ""), errors="coerce", format="ISO8601")
    ts = ts.to_numpy(dtype="datetime64[h]")
    if require_hourly:
        bad = np.flatnonzero(np.isnat(ts))
        if bad.size:
            raise DataError(f"unparsable timestamp {raw_ts.iloc[bad[0]]!r}", row=int(bad[0]) + 2)
        order = np.argsort(ts, kind="stable")
        ts, values = ts[order], values[order]
        line = order + 2
        gaps = np.diff(ts)
        dup = np.flatnonzero(gaps == np.timedelta64(0, "h"))
        if dup.size:
            raise DataError(f"duplicate hour {ts[dup[0]]}", row=int(line[dup[0] + 1]))
        hole = np.flatnonzero(gaps != _HOUR)
        if hole.size:
            raise DataError(
                f"missing hour(s) between {ts[hole[0]]} and {ts[hole[0] + 1]}",
                row=int(line[hole[0] + 1]),
            )
    return ts, values


def _read(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: empty file, expected header {','.join(COLUMNS)}") from exc
    frame.columns = [c.strip() for c in frame.columns]
    return frame


def ingest_csv(path) -> TimeSeriesDataset:
    """Read and validate an hourly CSV; rows are sorted by timestamp."""
    ts, values = _parse_frame(_read(path), require_hourly=True)
    return TimeSeriesDataset(ts, values, "original")


def read_dataset_csv(path) -> TimeSeriesDataset:
    """Read a dataset written by :meth:`TimeSeriesDataset.to_csv`.

    Unlike :func:`ingest_csv`, row order is kept and blank timestamps are
    allowed (generated rows).
    """
    frame = _read(path)
    sources = set(frame["source"].str.strip()) if "source" in frame.columns else {"original"}
    if len(sources) > 1:
        raise DataError(f"mixed provenance in one file: {sorted(sources)}")
    source = sources.pop() if sources else "original"
    if source == "original":
        ts, values = _parse_frame(frame, require_hourly=True)
    else:
        ts, values = _parse_frame(frame, require_hourly=False)
    return TimeSeriesDataset(ts, values, source)


# ---------------------------------------------------------------- normalization


@dataclass(frozen=True)
class NormalizationParams:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = np.asarray(self.min, float), np.asarray(self.max, float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("normalization bounds must satisfy max >= min per column")
        object.__setattr__(self, "min", _frozen(lo))
        object.__setattr__(self, "max", _frozen(hi))

    @property
    def span(self) -> np.ndarray:
        return self.max - self.min

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(np.array(d["min"]), np.array(d["max"]))


class MinMaxNormalizer(TransformerMixin, BaseEstimator):
    """Per-column affine map onto [0, 1]; constant columns map to 0."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.params_ = NormalizationParams(X.min(axis=0), X.max(axis=0))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return apply_normalizer(X, self.params_)

    def inverse_transform(self, X):
        check_is_fitted(self, "params_")
        return invert_normalizer(X, self.params_)


def apply_normalizer(data, params: NormalizationParams) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] != params.min.shape[0]:
        raise ValueError(f"expected {params.min.shape[0]} columns, got {data.shape[-1]}")
    span = params.span
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (data - params.min) / safe, 0.0)


def invert_normalizer(data, params: NormalizationParams) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] != params.min.shape[0]:
        raise ValueError(f"expected {params.min.shape[0]} columns, got {data.shape[-1]}")
    return data * params.span + params.min


def fit_apply_normalizer(ds: TimeSeriesDataset) -> tuple[TimeSeriesDataset, NormalizationParams]:
    if len(ds) < 2:
        raise ValueError("need at least 2 rows to fit a normalizer")
    norm = MinMaxNormalizer().fit(ds.values)
    scaled = TimeSeriesDataset(ds.timestamps, norm.transform(ds.values), ds.source, ds.lineage)
    return scaled, norm.params_


# ---------------------------------------------------------------- splits and windows


def split_chronological(ds: TimeSeriesDataset, train_fraction: float = 0.8):
    """First floor(fraction * n) rows train, the rest test; no shuffling."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(ds)
    cut = math.floor(train_fraction * n + 1e-9)
    if cut == 0 or cut == n:
        raise ValueError(f"fraction {train_fraction} leaves an empty partition of {n} rows")
    idx = np.arange(n)
    return ds.take(idx[:cut]), ds.take(idx[cut:])


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Fixed-length multivariate windows, shape ``(n_windows, length, n_features)``."""

    windows: np.ndarray
    source: str = "original"
    normalized: bool = False
    lineage: np.ndarray = field(default_factory=lambda: np.array([], dtype="datetime64[h]"))

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64)
        if w.ndim != 3:
            raise ValueError("windows must be a 3-D array")
        if self.normalized and w.size and (w.min() < 0.0 or w.max() > 1.0):
            raise ValueError("normalized windows must lie in [0, 1]")
        object.__setattr__(self, "windows", _frozen(w))
        object.__setattr__(self, "lineage", _frozen(np.asarray(self.lineage, dtype="datetime64[h]")))

    def __len__(self):
        return self.windows.shape[0]

    @property
    def window_length(self) -> int:
        return self.windows.shape[1]

    @property
    def n_features(self) -> int:
        return self.windows.shape[2]


def make_windows(
    ds: TimeSeriesDataset | np.ndarray,
    window_length: int = 24,
    stride: int = 1,
    normalized: bool = False,
) -> WindowSet:
    if isinstance(ds, TimeSeriesDataset):
        rows, source, lineage = ds.values, ds.source, ds.lineage
    else:
        rows, source, lineage = np.asarray(ds, dtype=np.float64), "original", None
    n = rows.shape[0]
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if window_length < 1 or window_length > n:
        raise ValueError(f"window of {window_length} does not fit in {n} rows")
    starts = np.arange(0, n - window_length + 1, stride)
    windows = np.stack([rows[s : s + window_length] for s in starts])
    kw = {} if lineage is None else {"lineage": lineage}
    return WindowSet(windows, source, normalized, **kw)


def replicate_rows(train: TimeSeriesDataset, target_rows: int) -> TimeSeriesDataset:
    """Cyclic repetition of ``train`` up to ``target_rows`` rows."""
    n = len(train)
    if target_rows < n:
        raise ValueError(f"target {target_rows} is smaller than the {n} source rows")
    idx = np.arange(target_rows) % n
    return TimeSeriesDataset(train.timestamps[idx], train.values[idx], "replicated", train.lineage)


def rows_from_windows(
    windows: np.ndarray, params: NormalizationParams, source: str, lineage
) -> TimeSeriesDataset:
    """Clip normalized windows to [0, 1], flatten to rows, undo normalization."""
    windows = np.asarray(windows, dtype=np.float64)
    n_cols = len(VALUE_COLUMNS)
    flat = np.clip(windows, 0.0, 1.0).reshape(-1, n_cols)
    values = invert_normalizer(flat, params)
    ts = np.full(flat.shape[0], np.datetime64("NaT"), dtype="datetime64[h]")
    return TimeSeriesDataset(ts, values, source, lineage)


def assert_no_leakage(lineage, test, stage: str) -> None:
    """Raise :class:`LeakageError` if any test timestamp is in ``lineage``.

    ``test`` is the test dataset or just its timestamps.
    """
    stamps = test.timestamps if isinstance(test, TimeSeriesDataset) else np.asarray(test, dtype="datetime64[h]")
    overlap = np.intersect1d(np.asarray(lineage, dtype="datetime64[h]"), stamps)
    if overlap.size:
        raise LeakageError(
            f"{stage}: {overlap.size} test-partition row(s) found in training data "
            f"(first: {overlap[0]})"
        )
