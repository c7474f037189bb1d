"""Regression trees, random forests, stochastic gradient boosting and baselines.

Every model keeps the ordered list of input variables it was trained on.
Internally the inputs are sorted by name, so the split tie-break rule
(lowest variable name, then lowest threshold) reduces to the lowest column
index inside the compiled kernel.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import _tree_kernel
from .data import Dataset
from .errors import FitError, PredictionError, QualityMineError
from .numerics import solve_least_squares

MODEL_FORMAT = "qualitymine-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Training parameters shared by trees, forests and boosting.

    ``n_trees`` is the forest size and also the number of boosting stages.
    ``max_leaf_nodes`` of ``None`` means unlimited. ``mtry`` of ``None``
    resolves to ``ceil(n_inputs / 3)`` for forests and to all inputs
    otherwise. ``bootstrap=False`` switches forests to subsampling without
    replacement using ``subsample_fraction``.
    """

    n_trees: int = 100
    max_leaf_nodes: int | None = None
    min_rows_per_leaf: int = 1
    mtry: int | None = None
    subsample_fraction: float = 1.0
    learn_rate: float = 0.1
    bootstrap: bool = True
    k_best_splits: int = 1
    seed: int = 0

    @classmethod
    def forest(cls, **kw):
        kw.setdefault("n_trees", 100)
        kw.setdefault("min_rows_per_leaf", 5)
        kw.setdefault("subsample_fraction", 0.632)
        return cls(**kw)

    @classmethod
    def boosting(cls, **kw):
        kw.setdefault("n_trees", 500)
        kw.setdefault("max_leaf_nodes", 2)
        kw.setdefault("learn_rate", 0.1)
        kw.setdefault("subsample_fraction", 0.5)
        return cls(**kw)

    def validate(self, n_inputs: int):
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 2:
            raise FitError("max_leaf_nodes must be at least 2")
        if self.min_rows_per_leaf < 1:
            raise FitError("min_rows_per_leaf must be at least 1")
        if self.mtry is not None and not 1 <= self.mtry <= n_inputs:
            raise FitError(f"mtry must lie in [1, {n_inputs}], got {self.mtry}")
        if self.n_trees < 0:
            raise FitError("n_trees must be nonnegative")
        if not 0 < self.subsample_fraction <= 1:
            raise FitError("subsample_fraction must lie in (0, 1]")
        if not 0 < self.learn_rate <= 1:
            raise FitError("learn_rate must lie in (0, 1]")
        if self.k_best_splits < 1:
            raise FitError("k_best_splits must be at least 1")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """A fitted binary regression tree stored as flat node arrays.

    ``feature[i]`` indexes ``feature_names``; leaves have ``left[i] == -1``.
    ``weight`` is the (weighted) training row count reaching each node and
    ``gain`` the reduction in squared error achieved by each split.
    """

    feature_names: tuple
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left == _tree_kernel.LEAF))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.left[i] != _tree_kernel.LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict_matrix(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        leaves = _tree_kernel.apply_tree(X, self.feature, self.threshold, self.left, self.right)
        return self.value[leaves]

    def importance(self) -> np.ndarray:
        out = np.zeros(len(self.feature_names))
        internal = self.left != _tree_kernel.LEAF
        np.add.at(out, self.feature[internal], self.gain[internal])
        return out

    def to_dict(self):
        def node(i):
            if self.left[i] == _tree_kernel.LEAF:
                return {"value": float(self.value[i]), "n": float(self.weight[i])}
            return {
                "split_variable": self.feature_names[self.feature[i]],
                "threshold": float(self.threshold[i]),
                "gain": float(self.gain[i]),
                "value": float(self.value[i]),
                "n": float(self.weight[i]),
                "left": node(self.left[i]),
                "right": node(self.right[i]),
            }

        return node(0)

    @classmethod
    def from_dict(cls, d, feature_names):
        names = tuple(feature_names)
        cols = {k: [] for k in ("feature", "threshold", "left", "right", "value", "weight", "gain")}

        def add(nd):
            i = len(cols["value"])
            for k in cols:
                cols[k].append(0)
            cols["value"][i] = nd["value"]
            cols["weight"][i] = nd["n"]
            if "split_variable" not in nd:
                cols["feature"][i] = -1
                cols["left"][i] = cols["right"][i] = _tree_kernel.LEAF
                return i
            cols["feature"][i] = names.index(nd["split_variable"])
            cols["threshold"][i] = nd["threshold"]
            cols["gain"][i] = nd["gain"]
            cols["left"][i] = add(nd["left"])
            cols["right"][i] = add(nd["right"])
            return i

        add(d)
        ints = ("feature", "left", "right")
        return cls(names, **{k: np.array(v, dtype=np.int64 if k in ints else float) for k, v in cols.items()})


@dataclass(frozen=True, eq=False)
class ForestModel:
    feature_names: tuple
    trees: tuple
    config: TrainConfig
    oob_indices: tuple

    def predict_matrix(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if not self.trees:
            raise PredictionError("forest has no trees")
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict_matrix(X)
        return total / len(self.trees)

    def oob_predictions(self, X) -> np.ndarray:
        """Mean prediction over trees for which each row was out of bag.

        ``X`` must be the training matrix; rows never out of bag get ``nan``.
        """
        X = np.ascontiguousarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        count = np.zeros(X.shape[0])
        for t, oob in zip(self.trees, self.oob_indices):
            if len(oob):
                total[oob] += t.predict_matrix(X[oob])
                count[oob] += 1
        with np.errstate(invalid="ignore"):
            return np.where(count > 0, total / np.maximum(count, 1), np.nan)


@dataclass(frozen=True, eq=False)
class BoostedModel:
    """``initial_value + learn_rate * sum(stage tree predictions)``."""

    feature_names: tuple
    initial_value: float
    stages: tuple
    learn_rate: float
    config: TrainConfig

    def predict_matrix(self, X, n_stages=None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.initial_value)
        for t in self.stages[:n_stages]:
            out += self.learn_rate * t.predict_matrix(X)
        return out

    def staged_predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.initial_value)
        yield out.copy()
        for t in self.stages:
            out += self.learn_rate * t.predict_matrix(X)
            yield out.copy()


@dataclass(frozen=True)
class ImportanceRanking:
    """(variable, score) pairs sorted by descending score, max score 100."""

    entries: tuple

    @property
    def variables(self) -> list[str]:
        return [v for v, _ in self.entries]

    def top(self, k: int) -> "ImportanceRanking":
        return ImportanceRanking(self.entries[:k])

    def score(self, name) -> float:
        return dict(self.entries)[name]

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_raw(cls, names: Sequence[str], raw) -> "ImportanceRanking":
        raw = np.asarray(raw, dtype=float)
        top = raw.max() if raw.size else 0.0
        scores = raw * (100.0 / top) if top > 0 else np.zeros_like(raw)
        pairs = sorted(zip(names, scores.tolist()), key=lambda e: (-e[1], e[0]))
        return cls(tuple((n, float(s)) for n, s in pairs))


def _training_arrays(train: Dataset):
    if train.n_rows == 0:
        raise FitError("cannot fit on an empty dataset")
    if train.response_name is None:
        raise FitError(f"dataset {train.name!r} has no response column")
    names = tuple(sorted(train.input_names))
    if not names:
        raise FitError("dataset has no input columns")
    cols = names + (train.response_name,)
    if any(train[c].n_missing for c in cols):
        raise FitError("training data has missing entries; impute first")
    X = np.ascontiguousarray(train.matrix(names), dtype=float)
    return names, X, train.response().astype(float)


def _stream(seed: int, index: int) -> np.random.Generator:
    # one independent stream per (seed, tree index); order of evaluation is irrelevant
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


class _Columns:
    """Feature-major copy of a training matrix with per-feature sort order."""

    def __init__(self, X):
        self.XT = np.ascontiguousarray(np.asarray(X, dtype=float).T)
        self.order = np.ascontiguousarray(np.argsort(self.XT, axis=1, kind="stable"))


def _grow(names, cols: _Columns, y, w, config: TrainConfig, mtry: int, kernel_seed: int) -> RegressionTree:
    rows = np.flatnonzero(w > 0).astype(np.int64)
    max_leaves = config.max_leaf_nodes or 0
    f, thr, left, right, value, weight, gain, _ = _tree_kernel.grow_tree(
        cols.XT, cols.order, np.ascontiguousarray(y, dtype=float),
        np.ascontiguousarray(w, dtype=float), rows, mtry,
        float(config.min_rows_per_leaf), max_leaves, config.k_best_splits, kernel_seed,
    )
    return RegressionTree(names, f, thr, left, right, value, weight, gain)


def fit_regression_tree(train: Dataset, config: TrainConfig | None = None,
                        row_weights=None) -> RegressionTree:
    """Grow one best-first regression tree on all input columns."""
    config = config or TrainConfig()
    names, X, y = _training_arrays(train)
    config.validate(len(names))
    w = np.ones(train.n_rows) if row_weights is None else np.asarray(row_weights, dtype=float)
    if w.shape != y.shape or np.any(w < 0) or not np.any(w > 0):
        raise FitError("row_weights must be nonnegative, one per row, not all zero")
    mtry = config.mtry or len(names)
    seed = int(_stream(config.seed, 0).integers(2**31 - 1))
    return _grow(names, _Columns(X), y, w, config, mtry, seed)


def _forest_tree(names, cols, y, config, mtry, index):
    rng = _stream(config.seed, index)
    n = len(y)
    if config.bootstrap:
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
    else:
        size = max(1, int(round(config.subsample_fraction * n)))
        counts = np.zeros(n)
        counts[rng.choice(n, size, replace=False)] = 1.0
    kernel_seed = int(rng.integers(2**31 - 1))
    tree = _grow(names, cols, y, counts, config, mtry, kernel_seed)
    return tree, np.flatnonzero(counts == 0)


def fit_random_forest(train: Dataset, config: TrainConfig | None = None, n_jobs: int = 1) -> ForestModel:
    """Bagged ensemble of randomized regression trees.

    Each tree sees a bootstrap resample (or a subsample without replacement
    when ``config.bootstrap`` is false) and ``mtry`` random candidate
    variables per split. Tree ``k`` draws all of its randomness from a stream
    keyed on ``(config.seed, k)``, so ``n_jobs`` never changes the result.
    """
    config = config or TrainConfig.forest()
    names, X, y = _training_arrays(train)
    config.validate(len(names))
    mtry = config.mtry or max(1, math.ceil(len(names) / 3))
    cols = _Columns(X)
    if n_jobs == 1:
        results = [_forest_tree(names, cols, y, config, mtry, k) for k in range(config.n_trees)]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_forest_tree)(names, cols, y, config, mtry, k) for k in range(config.n_trees)
        )
    trees = tuple(t for t, _ in results)
    oob = tuple(o for _, o in results)
    return ForestModel(names, trees, config, oob)


def fit_boosted_trees(train: Dataset, config: TrainConfig | None = None) -> BoostedModel:
    """Stochastic gradient boosting of small trees on squared error.

    Stage 0 predicts the response mean. Each later stage fits a tree with at
    most ``max_leaf_nodes`` leaves to the current residuals on a fresh
    subsample drawn without replacement, and is added with weight
    ``learn_rate``.
    """
    config = config or TrainConfig.boosting()
    names, X, y = _training_arrays(train)
    config.validate(len(names))
    mtry = config.mtry or len(names)
    n = len(y)
    init = float(np.mean(y))
    current = np.full(n, init)
    size = max(1, int(round(config.subsample_fraction * n)))
    cols = _Columns(X)
    stages = []
    for k in range(config.n_trees):
        rng = _stream(config.seed, k)
        w = np.zeros(n)
        if size >= n:
            w[:] = 1.0
        else:
            w[rng.choice(n, size, replace=False)] = 1.0
        tree = _grow(names, cols, y - current, w, config, mtry, int(rng.integers(2**31 - 1)))
        current = current + config.learn_rate * tree.predict_matrix(X)
        stages.append(tree)
    return BoostedModel(names, init, tuple(stages), config.learn_rate, config)


def _row_matrix(model_names, row) -> np.ndarray:
    if isinstance(row, Dataset):
        missing = [n for n in model_names if n not in row]
        if missing:
            raise PredictionError(f"dataset lacks variable {missing[0]!r}")
        return row.matrix(list(model_names))
    missing = [n for n in model_names if n not in row]
    if missing:
        raise PredictionError(f"row lacks variable {missing[0]!r}")
    return np.array([[float(row[n]) for n in model_names]])


def predict_model(model, row):
    """Predict one row (a name -> value mapping) or every row of a dataset.

    Returns a float for a mapping and an array for a :class:`Dataset`.
    """
    names = model.feature_names
    X = _row_matrix(names, row)
    out = model.predict_matrix(X)
    return out if isinstance(row, Dataset) else float(out[0])


def variable_importance(model) -> ImportanceRanking:
    """Split-gain importance normalized so the top variable scores 100.

    Each split contributes the reduction in squared error it achieved on the
    rows it saw (bootstrap rows for forests, the stage subsample for
    boosting, before shrinkage). Ties are broken by variable name.
    """
    if isinstance(model, RegressionTree):
        trees = (model,)
    elif isinstance(model, ForestModel):
        trees = model.trees
    elif isinstance(model, BoostedModel):
        trees = model.stages
    else:
        raise TypeError(f"cannot rank variables of {type(model).__name__}")
    raw = np.zeros(len(model.feature_names))
    for t in trees:
        raw += t.importance()
    return ImportanceRanking.from_raw(model.feature_names, raw)


@dataclass(frozen=True, eq=False)
class KNNModel:
    feature_names: tuple
    X: np.ndarray
    y: np.ndarray
    lo: np.ndarray
    span: np.ndarray
    k: int

    def predict_matrix(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.lo) / self.span
        T = (self.X - self.lo) / self.span
        d2 = ((Z[:, None, :] - T[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.y[nearest].mean(axis=1)


@dataclass(frozen=True, eq=False)
class OLSModel:
    feature_names: tuple
    intercept: float
    coefficients: np.ndarray

    def predict_matrix(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coefficients

    def coef(self, name) -> float:
        return float(self.coefficients[self.feature_names.index(name)])


def fit_baseline(train: Dataset, kind: str, params: Mapping | None = None):
    """Fit a ``"knn"`` or ``"ols"`` reference model."""
    params = dict(params or {})
    names, X, y = _training_arrays(train)
    if kind == "knn":
        k = int(params.get("k", 5))
        if not 1 <= k:
            raise FitError("knn needs k >= 1")
        k = min(k, len(y))
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span[span == 0] = 1.0
        return KNNModel(names, X, y, lo, span, k)
    if kind == "ols":
        if len(y) <= len(names):
            raise FitError(f"ols needs more rows than inputs ({len(y)} <= {len(names)})")
        A = np.column_stack([np.ones(len(y)), X])
        sol = solve_least_squares(A, y, ("(intercept)",) + names)
        return OLSModel(names, float(sol.coefficients[0]), sol.coefficients[1:].copy())
    raise FitError(f"unknown baseline kind {kind!r}")


def model_summary(model) -> dict:
    """Compact description for reports: sizes, depths and importances."""
    if isinstance(model, ForestModel):
        trees = model.trees
        kind = "random_forest"
    elif isinstance(model, BoostedModel):
        trees = model.stages
        kind = "boosted_trees"
    else:
        raise TypeError(type(model).__name__)
    out = {
        "kind": kind,
        "n_trees": len(trees),
        "mean_depth": float(np.mean([t.depth() for t in trees])) if trees else 0.0,
        "mean_leaves": float(np.mean([t.n_leaves for t in trees])) if trees else 0.0,
        "importance": [[v, s] for v, s in variable_importance(model).entries],
    }
    return out


def save_model(model, path=None) -> str:
    """Serialize a forest or boosted model to versioned JSON text."""
    if isinstance(model, ForestModel):
        body = {
            "kind": "random_forest",
            "oob_indices": [o.tolist() for o in model.oob_indices],
            "trees": [t.to_dict() for t in model.trees],
        }
    elif isinstance(model, BoostedModel):
        body = {
            "kind": "boosted_trees",
            "initial_value": model.initial_value,
            "learn_rate": model.learn_rate,
            "trees": [t.to_dict() for t in model.stages],
        }
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "feature_names": list(model.feature_names),
        "config": asdict(model.config),
        **body,
    }
    text = json.dumps(doc, sort_keys=True, indent=1)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_model(text_or_path):
    text = text_or_path
    if not text.lstrip().startswith("{"):
        with open(text_or_path, encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise QualityMineError("not a qualitymine model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise QualityMineError(f"unsupported model file version {doc.get('version')}")
    names = tuple(doc["feature_names"])
    config = TrainConfig(**doc["config"])
    trees = tuple(RegressionTree.from_dict(t, names) for t in doc["trees"])
    if doc["kind"] == "random_forest":
        oob = tuple(np.array(o, dtype=int) for o in doc["oob_indices"])
        return ForestModel(names, trees, config, oob)
    if doc["kind"] == "boosted_trees":
        return BoostedModel(names, doc["initial_value"], trees, doc["learn_rate"], config)
    raise QualityMineError(f"unknown model kind {doc['kind']!r}")
