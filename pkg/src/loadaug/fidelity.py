"""Distribution checks for generated data: PCA projection into the reference
frame, per-feature kernel density curves and mean/std tables."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import VALUE_COLUMNS, TimeSeriesDataset
from .plots import line_svg, scatter_svg, write_svg

_SQRT_2PI = np.sqrt(2.0 * np.pi)


# ---------------------------------------------------------------- PCA


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Standardize with the reference mean/std, then project on ``components``.

    ``kept`` marks the columns that entered the fit (constant columns are
    dropped). ``explained_variance_ratio`` is relative to the total variance
    of the standardized reference.
    """

    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.kept.shape[0]:
            raise ValueError(f"expected {self.kept.shape[0]} columns")
        Z = (X[:, self.kept] - self.mean) / self.std
        return Z @ self.components.T


def fit_pca(X, n_components: int = 2) -> PcaModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ValueError("PCA reference needs at least 3 rows")
    std = X.std(axis=0, ddof=1)
    kept = std > 0
    if not kept.all():
        warnings.warn(f"dropping constant column(s) {np.flatnonzero(~kept).tolist()} from PCA", stacklevel=2)
    if not kept.any():
        raise ValueError("every reference column is constant")
    mean = X[:, kept].mean(axis=0)
    Z = (X[:, kept] - mean) / std[kept]
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    var = s**2
    k = min(n_components, vt.shape[0])
    comps = vt[:k].copy()
    # fix the sign so that each direction's largest loading is positive
    for i in range(k):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return PcaModel(mean, std[kept], kept, comps, var[:k] / var.sum())


class PcaProjector(TransformerMixin, BaseEstimator):
    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.model_ = fit_pca(X, self.n_components)
        self.components_ = self.model_.components
        self.explained_variance_ratio_ = self.model_.explained_variance_ratio
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.transform(check_array(X, dtype=np.float64))


def pca_project2d(reference: TimeSeriesDataset, others=()):
    """Fit on ``reference`` only and project it and every other dataset.

    Returns ``(model, [reference_coords, *other_coords])``.
    """
    model = fit_pca(reference.values, 2)
    coords = [model.transform(reference.values)]
    for ds in others:
        if ds.values.shape[1] != reference.values.shape[1]:
            raise ValueError("datasets do not share columns")
        coords.append(model.transform(ds.values))
    return model, coords


# ---------------------------------------------------------------- KDE


@dataclass(frozen=True, eq=False)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def silverman_bandwidth(samples) -> float:
    """``1.06 * sd * n**(-1/5)``; falls back to 1.0 when the spread is zero."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    # spread at rounding level counts as constant
    if sd <= 1e-12 * max(1.0, float(np.abs(x).max())):
        return 1.0
    return float(1.06 * sd * x.size ** (-0.2))


def kde_density(samples, grid, bandwidth: float) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    g = np.asarray(grid, dtype=np.float64)
    u = (g[:, None] - x[None, :]) / bandwidth
    return np.exp(-0.5 * u * u).sum(axis=1) / (x.size * bandwidth * _SQRT_2PI)


def kde_grid(lo: float, hi: float, bandwidth: float, grid_size: int = 256) -> np.ndarray:
    """Evenly spaced grid over ``[lo - 3h, hi + 3h]``, refined beyond
    ``grid_size`` so the spacing never exceeds a quarter bandwidth."""
    start, stop = lo - 3.0 * bandwidth, hi + 3.0 * bandwidth
    n = max(int(grid_size), int(np.ceil((stop - start) / (0.25 * bandwidth))) + 1)
    n |= 1  # odd count puts a node at the centre
    return np.linspace(start, stop, n)


def kde_curve(samples, grid_size: int = 256, bandwidth: float | None = None, grid=None) -> KdeCurve:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("KDE needs at least one sample")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    elif not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = kde_grid(float(x.min()), float(x.max()), bandwidth, grid_size)
    grid = np.asarray(grid, dtype=np.float64)
    return KdeCurve(grid, kde_density(x, grid, bandwidth), float(bandwidth))


def shared_kde_curves(sample_sets, grid_size: int = 256) -> list[KdeCurve]:
    """Curves for several sample sets on one grid covering all of them
    (each set keeps its own Silverman bandwidth)."""
    sets = [np.asarray(s, dtype=np.float64).ravel() for s in sample_sets]
    hs = [silverman_bandwidth(s) for s in sets]
    lo = min(float(s.min()) for s in sets)
    hi = max(float(s.max()) for s in sets)
    span = hi - lo + 6.0 * max(hs)
    grid = kde_grid(lo, hi, max(hs), max(grid_size, int(np.ceil(span / (0.25 * min(hs)))) + 1))
    return [kde_curve(s, bandwidth=h, grid=grid) for s, h in zip(sets, hs)]


# ---------------------------------------------------------------- statistics


@dataclass(frozen=True, eq=False)
class FeatureStats:
    source: str
    columns: tuple
    mean: np.ndarray
    std: np.ndarray
    n_rows: int


def feature_statistics(ds: TimeSeriesDataset) -> FeatureStats:
    """Per-column mean and sample standard deviation (denominator n - 1)."""
    if len(ds) == 0:
        raise ValueError("cannot summarize an empty dataset")
    std = ds.values.std(axis=0, ddof=1) if len(ds) > 1 else np.zeros(ds.values.shape[1])
    return FeatureStats(ds.source, VALUE_COLUMNS, ds.values.mean(axis=0), std, len(ds))


def _labels(datasets) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for ds in datasets:
        k = seen.get(ds.source, 0)
        seen[ds.source] = k + 1
        out.append(ds.source if k == 0 else f"{ds.source}_{k + 1}")
    return out


def statistics_table(stats, labels) -> str:
    """CSV with one row per feature and a mean/std column pair per source."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["feature"]
    for lab in labels:
        header += [f"{lab}_mean", f"{lab}_std"]
    w.writerow(header)
    for j, col in enumerate(VALUE_COLUMNS):
        row = [col]
        for s in stats:
            row += [f"{s.mean[j]:.6g}", f"{s.std[j]:.6g}"]
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------- report


@dataclass
class FidelityReport:
    labels: list
    stats: list
    pca: PcaModel
    coords: list
    kde: dict
    files: list = field(default_factory=list)


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def fidelity_report(original: TimeSeriesDataset, generated, out_dir=None, grid_size: int = 256) -> FidelityReport:
    """Statistics table, PCA scatter and one KDE overlay per value column.

    With ``out_dir`` the report is written as ``stats.csv``, ``pca.svg`` plus
    ``pca.csv``, and ``kde_<column>.svg`` plus ``kde_<column>.csv``.
    """
    datasets = [original, *generated]
    for ds in generated:
        if ds.values.shape[1] != original.values.shape[1]:
            raise ValueError("generated data does not share the original columns")
    labels = _labels(datasets)
    stats = [feature_statistics(ds) for ds in datasets]
    pca, coords = pca_project2d(original, generated)
    kde = {col: shared_kde_curves([ds.values[:, j] for ds in datasets], grid_size) for j, col in enumerate(VALUE_COLUMNS)}
    report = FidelityReport(labels, stats, pca, coords, kde)
    if out_dir is None:
        return report

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "stats.csv"]
    files[0].write_text(statistics_table(stats, labels), encoding="utf-8")

    pca_rows = [[lab, i, f"{c[0]:.9g}", f"{c[1]:.9g}"] for lab, cs in zip(labels, coords) for i, c in enumerate(cs)]
    files.append(_write_csv(out / "pca.csv", ["source", "row", "pc1", "pc2"], pca_rows))
    ratio = pca.explained_variance_ratio
    files.append(
        write_svg(
            out / "pca.svg",
            scatter_svg(
                [(lab, c[:, 0], c[:, 1]) for lab, c in zip(labels, coords)],
                title="PCA projection (reference frame)",
                xlabel=f"PC1 ({100 * ratio[0]:.1f}%)",
                ylabel=f"PC2 ({100 * ratio[1]:.1f}%)" if ratio.size > 1 else "PC2",
            ),
        )
    )
    for col, curves in kde.items():
        grid = curves[0].grid
        rows = [[f"{g:.9g}"] + [f"{c.density[i]:.9g}" for c in curves] for i, g in enumerate(grid)]
        files.append(_write_csv(out / f"kde_{col}.csv", ["x"] + labels, rows))
        svg = line_svg([(lab, c.grid, c.density) for lab, c in zip(labels, curves)], title=f"KDE: {col}", xlabel=col, ylabel="density")
        files.append(write_svg(out / f"kde_{col}.svg", svg))
    report.files = files
    return report
