"""Flat-feature baselines: a CART random forest and multinomial logistic regression.

Both consume ``(N, T*C)`` feature matrices (timestep-major, channel-minor)
and 0-based class indices.  They see every timestep as an unrelated feature.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .ndcore import log_softmax


def gini(counts) -> float:
    """Gini impurity ``1 - sum p_c^2`` of a class-count histogram."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if counts.size == 0 or total <= 0:
        raise ValueError("gini needs a non-empty histogram")
    p = counts / total
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 400
    max_depth: int = 25
    min_samples_split: int = 2
    features_per_split: int | None = None  # None: ceil(sqrt(n_features))
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1 or self.max_depth < 1:
            raise ValueError("num_trees and max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def max_features(self, n_features: int) -> int:
        if self.features_per_split is None:
            return max(1, math.ceil(math.sqrt(n_features)))
        return max(1, min(self.features_per_split, n_features))


@dataclass
class Tree:
    """Flat pre-order node arrays; ``left == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (nodes, classes) training histogram per node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # pre-order: parents come first
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def leaf_classes(self) -> np.ndarray:
        return np.argmax(self.counts, axis=1)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        leaves = kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)
        return self.leaf_classes()[leaves]


@dataclass
class Forest:
    trees: list[Tree]
    n_classes: int
    n_features: int
    config: ForestConfig


@dataclass
class ForestPrediction:
    votes: np.ndarray  # int, (..., classes)
    probs: np.ndarray

    @property
    def argmax_class(self):
        return np.argmax(self.votes, axis=-1)


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def _tree_seeds(seed: int, num_trees: int):
    for child in np.random.SeedSequence(seed).spawn(num_trees):
        yield np.random.default_rng(child), int(child.generate_state(1, np.uint64)[0])


def fit_tree(X, y, n_classes, sample_idx, cfg: ForestConfig, kernel_seed: int) -> Tree:
    arrays = kernels.build_tree(X, y, sample_idx, n_classes, cfg.max_depth, cfg.min_samples_split,
                                cfg.max_features(X.shape[1]), kernel_seed)
    return Tree(*arrays)


def fit_forest(X, y, cfg: ForestConfig = ForestConfig(), n_classes: int | None = None,
               threads: int = 1) -> Forest:
    """Grow ``cfg.num_trees`` trees, each on its own bootstrap resample."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int32)
    if X.ndim != 2 or X.shape[0] == 0 or y.shape != (X.shape[0],):
        raise ValueError(f"need a non-empty (N, d) matrix and N labels, got {X.shape}, {y.shape}")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    jobs = [(bootstrap_indices(rng, len(y)), kseed) for rng, kseed in _tree_seeds(cfg.seed, cfg.num_trees)]

    def grow(job):
        return fit_tree(X, y, n_classes, job[0], cfg, job[1])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(grow, jobs))
    else:
        trees = [grow(j) for j in jobs]
    return Forest(trees, n_classes, X.shape[1], cfg)


def forest_votes(forest: Forest, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[-1] != forest.n_features:
        raise ValueError(f"forest was trained on {forest.n_features} features, got {X.shape[-1]}")
    votes = np.zeros((X.shape[0], forest.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in forest.trees:
        np.add.at(votes, (rows, tree.predict(X)), 1)
    return votes


def predict_forest(forest: Forest, X) -> ForestPrediction:
    """Majority vote; ``probs`` are vote fractions and ties go to the smaller class index."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    votes = forest_votes(forest, X[None] if single else X)
    probs = votes / len(forest.trees)
    if single:
        return ForestPrediction(votes[0], probs[0])
    return ForestPrediction(votes, probs)


# -- forest files --------------------------------------------------------------

def _node_dtype(n_classes: int) -> np.dtype:
    return np.dtype([("feature", "<i4"), ("threshold", "<f8"), ("left", "<i8"), ("right", "<i8"),
                     ("counts", "<i4", (n_classes,))])


def save_forest(forest: Forest, path) -> None:
    """Binary node records per tree (preceded by a little-endian int64 node count) plus ``path.json``."""
    path = Path(path)
    dt = _node_dtype(forest.n_classes)
    with open(path, "wb") as fh:
        for tree in forest.trees:
            rec = np.empty(tree.n_nodes, dtype=dt)
            rec["feature"], rec["threshold"] = tree.feature, tree.threshold
            rec["left"], rec["right"], rec["counts"] = tree.left, tree.right, tree.counts
            fh.write(np.int64(tree.n_nodes).astype("<i8").tobytes())
            fh.write(rec.tobytes())
    meta = {"format": "tsrnn-forest/1", "n_classes": forest.n_classes,
            "n_features": forest.n_features, "num_trees": len(forest.trees),
            "config": asdict(forest.config),
            "node_record": "int32 feature, float64 threshold, int64 left, int64 right, int32[n_classes] counts"}
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_forest(path) -> Forest:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    dt = _node_dtype(meta["n_classes"])
    raw = path.read_bytes()
    trees, pos = [], 0
    for _ in range(meta["num_trees"]):
        n = int(np.frombuffer(raw, "<i8", 1, pos)[0])
        pos += 8
        rec = np.frombuffer(raw, dt, n, pos)
        pos += n * dt.itemsize
        trees.append(Tree(rec["feature"].astype(np.int32), rec["threshold"].astype(np.float64),
                          rec["left"].astype(np.int64), rec["right"].astype(np.int64),
                          rec["counts"].astype(np.int32)))
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return Forest(trees, meta["n_classes"], meta["n_features"], ForestConfig(**meta["config"]))


# -- logistic regression --------------------------------------------------------

@dataclass
class LogisticModel:
    W: np.ndarray  # (classes, features)
    b: np.ndarray
    losses: list[float]

    def log_probs(self, X) -> np.ndarray:
        return log_softmax(np.asarray(X, dtype=np.float64) @ self.W.T + self.b)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.log_probs(X), axis=1)


def fit_logistic(X, y, n_classes: int, rate: float = 0.5, epochs: int = 500, seed: int = 0,
                 init_scale: float = 0.0) -> LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Weights start at zero unless ``init_scale > 0`` (then uniform in
    ``+-init_scale`` from ``seed``).  ``losses[k]`` is the mean cross-entropy
    before update ``k``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_logistic needs a non-empty (N, d) matrix")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    W = rng.uniform(-init_scale, init_scale, (n_classes, d)) if init_scale > 0 else np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    losses = []
    for epoch in range(epochs):
        lp = log_softmax(X @ W.T + b)
        cur = float(-(lp * onehot).sum() / n)
        if not np.isfinite(cur):
            raise FloatingPointError(f"logistic regression diverged at epoch {epoch}")
        losses.append(cur)
        resid = (np.exp(lp) - onehot) / n
        W -= rate * (resid.T @ X)
        b -= rate * resid.sum(axis=0)
    return LogisticModel(W, b, losses)
