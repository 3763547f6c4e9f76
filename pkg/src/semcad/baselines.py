"""Random forest and second-order gradient boosting on label-encoded features.

Integer codes are split ordinally (``code <= t`` goes left), which is how a
tree library sees label-encoded categoricals.  The boosting model is a compact
stand-in for XGBoost: logistic loss, Newton leaf weights ``-G/(H+lambda)``
and the matching split gain, no column subsampling or histogram binning.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from semcad import kernels
from semcad.data_model import EncodedDataset

BASELINE_FORMAT_VERSION = 1


class BaselineError(ValueError):
    pass


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int
    min_leaf: int

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, codes: np.ndarray) -> np.ndarray:
        return kernels.tree_apply(self.feature, self.threshold, self.left, self.right, codes)

    def predict(self, codes: np.ndarray) -> np.ndarray:
        return self.value[self.apply(codes)]

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DecisionTree":
        ints = {k: np.array(d[k], dtype=np.int64) for k in ("feature", "threshold", "left", "right")}
        return cls(value=np.array(d["value"], dtype=np.float64), max_depth=d["max_depth"], min_leaf=d["min_leaf"], **ints)


def _grow(codes, rows, n_bins, max_depth, min_leaf, choose_features, find_split, leaf_value) -> DecisionTree:
    """Depth-first growth; nodes are numbered in creation (pre-)order."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        value[node] = leaf_value(idx)
        if depth >= max_depth or idx.shape[0] < 2 * min_leaf:
            continue
        f, t, _ = find_split(idx, choose_features())
        if f < 0:
            continue
        go_left = codes[idx, f] <= t
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = int(f), int(t), lnode, rnode
        # right pushed first so the left subtree is expanded first
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.int64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
        max_depth,
        min_leaf,
    )


def _check_training(dataset: EncodedDataset):
    labels = dataset.labels
    if len(dataset) == 0:
        raise BaselineError("training set is empty")
    if len(np.unique(labels)) < 2:
        raise BaselineError("training set contains a single class")
    return np.ascontiguousarray(dataset.codes, dtype=np.int64), labels.astype(np.int64)


def _check_rows(codes, n_features: int) -> np.ndarray:
    x = np.asarray(codes, dtype=np.int64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != n_features:
        raise BaselineError(f"expected {n_features} features per row, got {x.shape[1]}")
    # codes beyond the training range behave like the largest seen code
    return np.ascontiguousarray(x)


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 12
    min_leaf: int = 5
    max_features: Optional[int] = None  # None -> ceil(sqrt(F))
    class_weight: Optional[float] = None  # None -> n_normal / n_anomaly
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be >= 1, max_depth >= 0")


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)
    class_weight: float = 1.0

    def predict_proba(self, codes) -> np.ndarray:
        x = _check_rows(codes, self.n_features)
        total = np.zeros(x.shape[0])
        for tree in self.trees:
            total += tree.predict(x)
        return total / len(self.trees)


def rf_fit(dataset: EncodedDataset, config: ForestConfig = ForestConfig()) -> ForestModel:
    """Bootstrap-aggregated Gini trees with class-weighted counts.

    Leaf values are the class-weighted anomaly share of the leaf.
    """
    codes, labels = _check_training(dataset)
    n, nfeat = codes.shape
    n_bins = int(max(dataset.cardinalities.max(), codes.max() + 1))
    weight = config.class_weight
    if weight is None:
        weight = float(np.sum(labels == 0)) / float(np.sum(labels == 1))
    wpos = np.where(labels == 1, weight, 0.0)
    wneg = np.where(labels == 0, 1.0, 0.0)
    mtry = config.max_features or math.ceil(math.sqrt(nfeat))
    mtry = min(mtry, nfeat)

    trees = []
    for child in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        rows = np.sort(rows)

        def leaf_value(idx):
            p = wpos[idx].sum()
            q = wneg[idx].sum()
            return p / (p + q) if p + q > 0 else 0.0

        def choose():
            return np.sort(rng.choice(nfeat, size=mtry, replace=False)).astype(np.int64)

        def split(idx, feats):
            return kernels.gini_best_split(codes, idx, feats, wpos, wneg, n_bins, config.min_leaf)

        trees.append(_grow(codes, rows, n_bins, config.max_depth, config.min_leaf, choose, split, leaf_value))
    return ForestModel(trees, nfeat, config, weight)


def rf_predict(model: ForestModel, row) -> float:
    """Mean leaf probability over the trees for a single row."""
    return float(model.predict_proba(np.asarray(row).reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# gradient boosting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoostConfig:
    rounds: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("rounds and max_depth must be >= 0, min_leaf >= 1")
        if self.learning_rate < 0 or self.reg_lambda < 0:
            raise ValueError("learning_rate and reg_lambda must be non-negative")


@dataclass
class BoostedModel:
    initial_logit: float
    trees: list[DecisionTree]
    learning_rate: float
    n_features: int
    config: BoostConfig = field(default_factory=BoostConfig)
    loss_trace: list[float] = field(default_factory=list)

    def decision_function(self, codes) -> np.ndarray:
        x = _check_rows(codes, self.n_features)
        score = np.full(x.shape[0], self.initial_logit)
        for tree in self.trees:
            score += self.learning_rate * tree.predict(x)
        return score

    def predict_proba(self, codes) -> np.ndarray:
        return _sigmoid(self.decision_function(codes))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def logistic_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, scores) - labels * scores))


def gbt_fit(dataset: EncodedDataset, config: BoostConfig = BoostConfig()) -> BoostedModel:
    """Newton boosting of depth-limited regression trees on the logistic loss."""
    codes, labels = _check_training(dataset)
    n, nfeat = codes.shape
    n_bins = int(max(dataset.cardinalities.max(), codes.max() + 1))
    prevalence = labels.mean()
    init = math.log(prevalence / (1.0 - prevalence))
    score = np.full(n, init)
    all_feats = np.arange(nfeat, dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)
    y = labels.astype(np.float64)
    trees, trace = [], [logistic_loss(score, y)]
    lam = config.reg_lambda
    for _ in range(config.rounds):
        p = _sigmoid(score)
        grad = p - y
        hess = p * (1.0 - p)
        if not (np.isfinite(grad).all() and np.isfinite(hess).all()):
            raise BaselineError("non-finite gradient residuals")

        def leaf_value(idx, grad=grad, hess=hess):
            return -grad[idx].sum() / (hess[idx].sum() + lam)

        def split(idx, feats, grad=grad, hess=hess):
            return kernels.newton_best_split(codes, idx, feats, grad, hess, lam, n_bins, config.min_leaf)

        tree = _grow(codes, rows, n_bins, config.max_depth, config.min_leaf, lambda: all_feats, split, leaf_value)
        trees.append(tree)
        score = score + config.learning_rate * tree.predict(codes)
        trace.append(logistic_loss(score, y))
    return BoostedModel(init, trees, config.learning_rate, nfeat, config, trace)


def gbt_predict(model: BoostedModel, row) -> float:
    return float(model.predict_proba(np.asarray(row).reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def model_to_json(model, extra: Optional[dict] = None) -> dict:
    if isinstance(model, ForestModel):
        doc = {
            "method": "rf",
            "n_features": model.n_features,
            "class_weight": model.class_weight,
            "config": asdict(model.config),
            "trees": [t.to_json() for t in model.trees],
        }
    elif isinstance(model, BoostedModel):
        doc = {
            "method": "gbt",
            "n_features": model.n_features,
            "initial_logit": model.initial_logit,
            "learning_rate": model.learning_rate,
            "config": asdict(model.config),
            "trees": [t.to_json() for t in model.trees],
        }
    else:
        raise TypeError(f"not a baseline model: {type(model).__name__}")
    doc["format_version"] = BASELINE_FORMAT_VERSION
    doc.update(extra or {})
    return doc


def model_from_json(doc: dict):
    if doc.get("format_version") != BASELINE_FORMAT_VERSION:
        raise BaselineError(f"unsupported baseline format_version {doc.get('format_version')!r}")
    trees = [DecisionTree.from_json(t) for t in doc["trees"]]
    if doc["method"] == "rf":
        return ForestModel(trees, doc["n_features"], ForestConfig(**doc["config"]), doc["class_weight"])
    if doc["method"] == "gbt":
        return BoostedModel(doc["initial_logit"], trees, doc["learning_rate"], doc["n_features"], BoostConfig(**doc["config"]))
    raise BaselineError(f"unknown baseline method {doc['method']!r}")


def save_model(model, path, extra: Optional[dict] = None) -> None:
    text = json.dumps(model_to_json(model, extra), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return model_from_json(doc), doc
