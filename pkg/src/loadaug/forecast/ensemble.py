"""Tree ensembles for load regression: ExtraTrees, random forest and
gradient-boosted trees, all grown by the compiled builder in ``_tree``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..numerics.rng import substream, uniform_open
from . import _tree

KINDS = ("extratrees", "random_forest", "gbdt")


@dataclass(frozen=True, eq=False)
class Tree:
    """Parallel-array regression tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == _tree.LEAF

    def apply(self, X) -> np.ndarray:
        return _tree.apply_tree(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] != _tree.LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: str
    trees: tuple
    weights: np.ndarray
    base_score: float
    n_features: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if len(self.trees) < 1 or len(self.trees) != len(self.weights):
            raise ValueError("need at least one tree and one weight per tree")


def _check_data(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-D feature matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("targets must be a vector with one entry per row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    return np.ascontiguousarray(X), np.ascontiguousarray(y)


def _resolve_max_features(max_features, d: int) -> int:
    k = max(1, d // 3) if max_features is None else int(max_features)
    if k < 1 or k > d:
        raise ValueError(f"max_features={k} outside [1, {d}]")
    return k


def _grow(X, y, rows, mode, k, min_leaf, max_depth, gen) -> Tree:
    # uniform pool: at most 2 draws per feature per node, and fewer than 2n nodes
    pool = uniform_open(gen, 4 * rows.shape[0] * X.shape[1] + 16)
    arrays = _tree.build_tree(X, y, rows, mode, k, min_leaf, -1 if max_depth is None else int(max_depth), pool)
    return Tree(*arrays)


def fit_forest(
    X,
    y,
    kind: str = "extratrees",
    n_estimators: int = 100,
    max_features=None,
    min_samples_leaf: int = 1,
    max_depth=None,
    seed: int = 0,
) -> EnsembleModel:
    """Averaging ensemble.

    ``extratrees`` grows every tree on all rows with one random threshold per
    candidate feature; ``random_forest`` bootstraps rows and searches the best
    threshold. ``max_features`` defaults to ``max(1, d // 3)``.
    """
    if kind not in ("extratrees", "random_forest"):
        raise ValueError("forest kind must be 'extratrees' or 'random_forest'")
    if n_estimators < 1 or min_samples_leaf < 1:
        raise ValueError("n_estimators and min_samples_leaf must be >= 1")
    X, y = _check_data(X, y)
    n, d = X.shape
    k = _resolve_max_features(max_features, d)
    trees = []
    for i in range(n_estimators):
        gen = substream(seed, "trees", kind, i)
        if kind == "extratrees":
            rows, mode = np.arange(n, dtype=np.int64), _tree.RANDOM_SPLIT
        else:
            rows, mode = gen.integers(0, n, size=n).astype(np.int64), _tree.BEST_SPLIT
        trees.append(_grow(X, y, rows, mode, k, min_samples_leaf, max_depth, gen))
    weights = np.full(n_estimators, 1.0 / n_estimators)
    return EnsembleModel(kind, tuple(trees), weights, 0.0, d)


def fit_gbdt(
    X,
    y,
    rounds: int = 200,
    learning_rate: float = 0.1,
    depth: int = 3,
    min_samples_leaf: int = 1,
    max_features=None,
    seed: int = 0,
) -> EnsembleModel:
    """Least-squares gradient boosting starting from the target mean.

    Every split searches all features unless ``max_features`` is given.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if learning_rate <= 0 or depth < 1:
        raise ValueError("need learning_rate > 0 and depth >= 1")
    X, y = _check_data(X, y)
    n, d = X.shape
    k = d if max_features is None else _resolve_max_features(max_features, d)
    base = float(np.mean(y))
    pred = np.full(n, base)
    rows = np.arange(n, dtype=np.int64)
    trees = []
    for i in range(rounds):
        residual = y - pred
        tree = _grow(X, residual, rows, _tree.BEST_SPLIT, k, min_samples_leaf, depth, substream(seed, "trees", "gbdt", i))
        pred = pred + learning_rate * tree.predict(X)
        trees.append(tree)
    return EnsembleModel("gbdt", tuple(trees), np.full(rounds, float(learning_rate)), base, d)


def tree_predictions(model: EnsembleModel, X) -> np.ndarray:
    """Per-tree outputs, shape ``(n_trees, n_rows)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got shape {X.shape}")
    return np.stack([t.predict(X) for t in model.trees])


def predict_ensemble(model: EnsembleModel, X) -> np.ndarray:
    per_tree = tree_predictions(model, X)
    if model.kind == "gbdt":
        return model.base_score + model.weights @ per_tree
    return per_tree.mean(axis=0)


def staged_predict(model: EnsembleModel, X):
    """Yield boosted predictions after each round (gbdt only)."""
    if model.kind != "gbdt":
        raise ValueError("staged_predict applies to gbdt models")
    pred = np.full(np.asarray(X).shape[0], model.base_score)
    for w, out in zip(model.weights, tree_predictions(model, X)):
        pred = pred + w * out
        yield pred


# ---------------------------------------------------------------- estimators


class _EnsembleRegressor(RegressorMixin, BaseEstimator):
    def _fit_model(self, X, y):
        raise NotImplementedError

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.model_ = self._fit_model(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return predict_ensemble(self.model_, X)

    @property
    def estimators_(self):
        check_is_fitted(self, "model_")
        return list(self.model_.trees)


class ExtraTrees(_EnsembleRegressor):
    """Extremely randomized trees regressor."""

    def __init__(self, n_estimators=100, max_features=None, min_samples_leaf=1, max_depth=None, random_state=0):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.max_depth = max_depth
        self.random_state = random_state

    _kind = "extratrees"

    def _fit_model(self, X, y):
        return fit_forest(
            X, y, self._kind, self.n_estimators, self.max_features, self.min_samples_leaf, self.max_depth,
            int(self.random_state or 0),
        )


class RandomForest(ExtraTrees):
    """Bootstrap forest with best-threshold splits."""

    _kind = "random_forest"


class GradientBoostedTrees(_EnsembleRegressor):
    def __init__(self, n_rounds=200, learning_rate=0.1, max_depth=3, min_samples_leaf=1, max_features=None, random_state=0):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state

    def _fit_model(self, X, y):
        return fit_gbdt(
            X, y, self.n_rounds, self.learning_rate, self.max_depth, self.min_samples_leaf, self.max_features,
            int(self.random_state or 0),
        )

    def staged_predict(self, X):
        check_is_fitted(self, "model_")
        return staged_predict(self.model_, check_array(X, dtype=np.float64))
