"""Minibatch training, stratified k-fold cross-validation and run logs."""

from __future__ import annotations

import dataclasses
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baseline
from .data import Dataset
from .net import NetworkConfig, backward_batch, batch_loss, forward_batch, init_params, predict
from .optim import NonFiniteGradientError, Rmsprop

MODELS = ("lstm", "gru", "rf", "logistic")
INPUT_SCALE = 255.0


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    base_rate: float = 5e-4
    decay: float = 5e-5
    rho: float = 0.9
    epsilon: float = 1e-8
    clip_norm: float | None = None

    def build(self) -> Rmsprop:
        return Rmsprop(self.base_rate, self.decay, self.rho, self.epsilon, self.clip_norm)


@dataclass(frozen=True)
class LogisticConfig:
    rate: float = 0.5
    epochs: int = 500


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 350
    batch_size: int = 64
    folds: int = 5
    shuffle_seed: int = 0
    network: NetworkConfig = NetworkConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    forest: baseline.ForestConfig = baseline.ForestConfig()
    logistic: LogisticConfig = LogisticConfig()
    fold_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        """350 epochs, batch 64, 5 layers of 512 units, RMSprop 5e-4 with 5e-5 decay."""
        return cls(**{"network": NetworkConfig.paper(), **overrides})

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Test-scale run: 2 layers of 32 units, 50 epochs, base rate raised to 2e-3."""
        return cls(**{"epochs": 50, "network": NetworkConfig.desk(),
                      "optimizer": OptimizerConfig(base_rate=2e-3), **overrides})

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        nested = {"network": NetworkConfig, "optimizer": OptimizerConfig,
                  "forest": baseline.ForestConfig, "logistic": LogisticConfig}
        for key, sub in nested.items():
            if key in doc:
                doc[key] = sub(**doc[key])
        return cls(**doc)


@dataclass
class FoldPlan:
    assignments: np.ndarray  # per-sample fold index
    folds: int

    def test_indices(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == f)

    def train_indices(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != f)


def make_folds(labels, folds: int = 5, seed: int = 0, groups=None) -> FoldPlan:
    """Stratified fold assignment.

    Within each class (ascending), a seeded permutation is dealt round-robin
    into the folds.  With ``groups`` (e.g. field-plot ids), whole groups are
    dealt instead, stratified by each group's majority class, so no group is
    split across folds.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    assignments = np.full(len(labels), -1, dtype=np.int64)
    if groups is None:
        for c in np.unique(labels):
            members = np.flatnonzero(labels == c)
            if len(members) < folds:
                raise ValueError(f"class {c} has {len(members)} samples, fewer than {folds} folds")
            assignments[members[rng.permutation(len(members))]] = np.arange(len(members)) % folds
        return FoldPlan(assignments, folds)

    groups = np.asarray(groups)
    if groups.shape != labels.shape:
        raise ValueError("groups must align with labels")
    uniq, inverse = np.unique(groups, return_inverse=True)
    majority = np.array([np.bincount(np.searchsorted(np.unique(labels), labels[inverse == g])).argmax()
                         for g in range(len(uniq))])
    class_ids = np.unique(labels)
    for ci, c in enumerate(class_ids):
        members = np.flatnonzero(majority == ci)
        if len(members) < folds:
            raise ValueError(f"class {c} has {len(members)} groups, fewer than {folds} folds")
        group_fold = np.empty(len(members), dtype=np.int64)
        group_fold[rng.permutation(len(members))] = np.arange(len(members)) % folds
        for g, f in zip(members, group_fold):
            assignments[inverse == g] = f
    return FoldPlan(assignments, folds)


@dataclass
class FitResult:
    params: object
    losses: list[float]
    epoch_seconds: list[float]


def _norms(params) -> str:
    return "parameter norms: " + ", ".join(f"{k}={v:.3g}" for k, v in params.norms().items())


def train_fold(X, y, cfg: TrainConfig, initial_loss: bool = False) -> FitResult:
    """Train a fresh network on scaled inputs ``X`` (N, T, C) with 0-based labels ``y``.

    Returns the final parameters and the per-epoch mean training loss (mean of
    per-sample losses seen during the epoch, before each batch's update).  With
    ``initial_loss`` the list starts with the loss of the untrained network.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot train on an empty set")
    net_cfg = cfg.network.replace(input_dim=X.shape[2])
    params = init_params(net_cfg)
    opt = cfg.optimizer.build()
    rng = np.random.default_rng(cfg.shuffle_seed)
    losses, seconds = [], []
    if initial_loss:
        lp = np.log(np.maximum(predict(params, X), np.finfo(float).tiny))
        losses.append(batch_loss(lp, y))
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        order = rng.permutation(len(X))
        total = 0.0
        for b, s in enumerate(range(0, len(X), cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            _, trace = forward_batch(params, X[idx])
            cur = batch_loss(trace.log_probs, y[idx])
            if not np.isfinite(cur):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}; {_norms(params)}")
            total += cur * len(idx)
            try:
                opt.apply_update(params, backward_batch(params, trace, y[idx]))
            except NonFiniteGradientError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}; {_norms(params)}") from exc
        losses.append(total / len(X))
        seconds.append(time.perf_counter() - start)
    return FitResult(params, losses, seconds)


@dataclass
class RunLog:
    model: str
    plan: FoldPlan
    true_labels: np.ndarray  # class ids
    predictions: np.ndarray  # class ids, aligned with the dataset
    ids: list[str]
    fold_losses: list[list[float]] = field(default_factory=list)
    fold_seconds: list[list[float]] = field(default_factory=list)

    def predictions_csv(self) -> str:
        buf = io.StringIO()
        buf.write("sample_id,true_label,predicted_label\n")
        for sid, t, p in zip(self.ids, self.true_labels, self.predictions):
            buf.write(f"{sid},{int(t)},{int(p)}\n")
        return buf.getvalue()

    def report(self) -> str:
        """Line-oriented summary; excludes wall-clock timings so reruns compare equal."""
        lines = [f"model: {self.model}", f"samples: {len(self.ids)}", f"folds: {self.plan.folds}"]
        for f in range(self.plan.folds):
            lines.append(f"fold {f}: test {int((self.plan.assignments == f).sum())}")
            if f < len(self.fold_losses) and self.fold_losses[f]:
                curve = " ".join(repr(float(v)) for v in self.fold_losses[f])
                lines.append(f"fold {f} loss: {curve}")
        return "\n".join(lines) + "\n"

    def timings(self) -> dict:
        return {"model": self.model, "fold_epoch_seconds": self.fold_seconds}


def _fit_predict(model: str, ds: Dataset, train_idx, test_idx, cfg: TrainConfig):
    """Train on ``train_idx`` only and predict ``test_idx``.  Returns (0-based preds, losses, seconds)."""
    y_all = ds.class_index()
    n_classes = len(ds.classes)
    Xtr = ds.X[train_idx] / INPUT_SCALE
    Xte = ds.X[test_idx] / INPUT_SCALE
    ytr = y_all[train_idx]
    if model in ("lstm", "gru"):
        c = cfg.replace(network=cfg.network.replace(cell_kind=model, num_classes=n_classes))
        fit = train_fold(Xtr, ytr, c)
        return np.argmax(predict(fit.params, Xte), axis=1), fit.losses, fit.epoch_seconds
    if model == "rf":
        start = time.perf_counter()
        forest = baseline.fit_forest(Xtr.reshape(len(Xtr), -1), ytr, cfg.forest, n_classes)
        pred = baseline.predict_forest(forest, Xte.reshape(len(Xte), -1)).argmax_class
        return pred, [], [time.perf_counter() - start]
    if model == "logistic":
        start = time.perf_counter()
        lm = baseline.fit_logistic(Xtr.reshape(len(Xtr), -1), ytr, n_classes,
                                   cfg.logistic.rate, cfg.logistic.epochs)
        return lm.predict(Xte.reshape(len(Xte), -1)), lm.losses, [time.perf_counter() - start]
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


def cross_validate(ds: Dataset, cfg: TrainConfig, model: str = "gru", threads: int = 1,
                   groups=None) -> RunLog:
    """k-fold cross-validation; every sample receives exactly one held-out prediction."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    plan = make_folds(ds.labels, cfg.folds, cfg.fold_seed, groups)
    classes = np.asarray(ds.classes)

    def run(f):
        try:
            return _fit_predict(model, ds, plan.train_indices(f), plan.test_indices(f), cfg)
        except TrainingError as exc:
            raise TrainingError(f"{model}, fold {f}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(cfg.folds)))
    else:
        results = [run(f) for f in range(cfg.folds)]

    predictions = np.full(len(ds), -1, dtype=np.int64)
    for f, (pred, _, _) in enumerate(results):
        predictions[plan.test_indices(f)] = classes[pred]
    assert (predictions >= 0).all()
    return RunLog(model, plan, ds.labels.copy(), predictions, list(ds.ids),
                  [list(r[1]) for r in results], [list(r[2]) for r in results])
