"""Stacked recurrent classifier with a softmax head.

Every recurrent layer emits its full hidden sequence, which becomes the input
sequence of the next layer.  Only the last layer's final hidden state reaches
the softmax layer.

Batched sequences are ``(batch, T, channels)``; a single sequence is
``(T, channels)``.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cells import GruParams, LstmParams, backward_sequence, forward_sequence
from .ndcore import DTYPE, ShapeError, glorot_uniform, log_softmax

CELL_KINDS = {"lstm": LstmParams, "gru": GruParams}
CHECKPOINT_FORMAT = "tsrnn-checkpoint/1"


@dataclass(frozen=True)
class NetworkConfig:
    cell_kind: str = "gru"
    num_layers: int = 5
    hidden_dim: int = 512
    input_dim: int = 2
    num_classes: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.cell_kind not in CELL_KINDS:
            raise ValueError(f"cell_kind must be one of {sorted(CELL_KINDS)}, got {self.cell_kind!r}")
        for name in ("num_layers", "hidden_dim", "input_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @classmethod
    def paper(cls, **overrides) -> "NetworkConfig":
        return cls(**{"num_layers": 5, "hidden_dim": 512, **overrides})

    @classmethod
    def desk(cls, **overrides) -> "NetworkConfig":
        return cls(**{"num_layers": 2, "hidden_dim": 32, **overrides})

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)


class NetworkParams:
    """Cell parameters per layer plus the softmax layer.

    The same class holds gradients.  ``version`` is bumped by every in-place
    update so that stale forward traces can be detected.
    """

    def __init__(self, config: NetworkConfig, layers, softmax_W, softmax_b):
        self.config = config
        self.layers = list(layers)
        self.softmax_W = np.ascontiguousarray(softmax_W, dtype=DTYPE)
        self.softmax_b = np.ascontiguousarray(softmax_b, dtype=DTYPE)
        self.version = 0
        cell_cls = CELL_KINDS[config.cell_kind]
        if len(self.layers) != config.num_layers:
            raise ShapeError(f"expected {config.num_layers} layers, got {len(self.layers)}")
        for k, layer in enumerate(self.layers):
            want_in = config.input_dim if k == 0 else config.hidden_dim
            if (not isinstance(layer, cell_cls) or layer.input_dim != want_in
                    or layer.hidden_dim != config.hidden_dim):
                raise ShapeError(f"layer {k} is {layer!r}, expected {cell_cls.__name__}"
                                 f"(input_dim={want_in}, hidden_dim={config.hidden_dim})")
        if self.softmax_W.shape != (config.num_classes, config.hidden_dim):
            raise ShapeError(f"softmax_W has shape {self.softmax_W.shape}")
        if self.softmax_b.shape != (config.num_classes,):
            raise ShapeError(f"softmax_b has shape {self.softmax_b.shape}")

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "NetworkParams":
        cell_cls = CELL_KINDS[config.cell_kind]
        layers = [cell_cls.zeros(config.input_dim if k == 0 else config.hidden_dim, config.hidden_dim)
                  for k in range(config.num_layers)]
        return cls(config, layers,
                   np.zeros((config.num_classes, config.hidden_dim)), np.zeros(config.num_classes))

    def arrays(self) -> list[np.ndarray]:
        """All storage arrays in a fixed order (layer by layer, head last)."""
        out = [a for layer in self.layers for a in layer.arrays()]
        return out + [self.softmax_W, self.softmax_b]

    def array_names(self) -> list[str]:
        names = [f"layer{k}.{n}" for k in range(len(self.layers)) for n in ("wx", "wh", "b")]
        return names + ["softmax_W", "softmax_b"]

    def named(self) -> dict[str, np.ndarray]:
        """Per-gate views in declared field order, then the softmax layer."""
        out = {}
        for k, layer in enumerate(self.layers):
            for name, view in layer.named().items():
                out[f"layer{k}.{name}"] = view
        out["softmax_W"] = self.softmax_W
        out["softmax_b"] = self.softmax_b
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, [l.copy() for l in self.layers],
                             self.softmax_W.copy(), self.softmax_b.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams.zeros(self.config)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(a)) for n, a in zip(self.array_names(), self.arrays())}

    def __eq__(self, other):
        return (isinstance(other, NetworkParams) and self.config == other.config
                and all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())))


NetworkGrads = NetworkParams


@dataclass
class Prediction:
    probs: np.ndarray
    log_probs: np.ndarray

    @property
    def argmax_class(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class NetTrace:
    layer_traces: list
    logits: np.ndarray
    log_probs: np.ndarray
    params_id: int
    params_version: int
    batched: bool


def init_params(cfg: NetworkConfig) -> NetworkParams:
    """Glorot-uniform weights per gate matrix, zero biases, seeded by ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    params = NetworkParams.zeros(cfg)
    for layer in params.layers:
        for name, view in layer.named().items():
            if name.startswith("W_"):
                view[...] = glorot_uniform(rng, *view.shape)
    params.softmax_W[...] = glorot_uniform(rng, *params.softmax_W.shape)
    return params


def _as_batch(params: NetworkParams, xs):
    xs = np.asarray(xs, dtype=DTYPE)
    batched = xs.ndim == 3
    if not batched:
        xs = xs[None]
    if xs.ndim != 3 or xs.shape[1] < 1 or xs.shape[2] != params.config.input_dim:
        raise ShapeError(f"expected (T, {params.config.input_dim}) sequences, got {xs.shape}")
    return xs, batched


def forward_batch(params: NetworkParams, X):
    """Forward a batch ``(B, T, C)``.  Returns ``(probs (B, K), trace)``."""
    X, batched = _as_batch(params, X)
    seq = np.ascontiguousarray(X.transpose(1, 0, 2))
    traces = []
    for layer in params.layers:
        seq, tr = forward_sequence(layer, seq)
        traces.append(tr)
    logits = seq[-1] @ params.softmax_W.T + params.softmax_b
    log_probs = log_softmax(logits)
    trace = NetTrace(traces, logits, log_probs, id(params), params.version, batched)
    return np.exp(log_probs), trace


def forward(params: NetworkParams, xs):
    """Classify one ``(T, C)`` sequence.  Returns ``(Prediction, trace)``."""
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 2:
        raise ShapeError(f"forward takes one (T, C) sequence, got shape {xs.shape}")
    probs, trace = forward_batch(params, xs)
    return Prediction(probs[0], trace.log_probs[0]), trace


def predict(params: NetworkParams, X, batch_size: int = 1024) -> np.ndarray:
    """Class probabilities for ``(N, T, C)`` inputs, in chunks."""
    X = np.asarray(X, dtype=DTYPE)
    out = [forward_batch(params, X[s:s + batch_size])[0] for s in range(0, len(X), batch_size)]
    if not out:
        return np.zeros((0, params.config.num_classes))
    return np.concatenate(out)


def _check_labels(labels, num_classes):
    labels = np.atleast_1d(np.asarray(labels))
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got {labels.dtype}")
    bad = (labels < 0) | (labels >= num_classes)
    if bad.any():
        raise ValueError(f"label {labels[bad][0]} outside [0, {num_classes})")
    return labels


def loss(pred: Prediction, label: int) -> float:
    """Cross-entropy ``-log p[label]`` from the stabilised log-probabilities."""
    (label,) = _check_labels(label, pred.probs.shape[-1])
    return float(-pred.log_probs[label])


def batch_loss(log_probs, labels) -> float:
    labels = _check_labels(labels, log_probs.shape[-1])
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def backward_batch(params: NetworkParams, trace: NetTrace, labels) -> NetworkParams:
    """Gradient of the mean cross-entropy over the batch."""
    if trace.params_id != id(params) or trace.params_version != params.version:
        raise ValueError("trace was produced by different or since-updated parameters")
    B = trace.logits.shape[0]
    labels = _check_labels(labels, params.config.num_classes)
    if labels.shape[0] != B:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {B}")
    grads = params.zeros_like()
    d_logits = np.exp(trace.log_probs)
    d_logits[np.arange(B), labels] -= 1.0
    d_logits /= B
    top = trace.layer_traces[-1]
    grads.softmax_W[...] = d_logits.T @ top.h[-1]
    grads.softmax_b[...] = d_logits.sum(axis=0)
    d_hs = np.zeros_like(top.h)
    d_hs[-1] = d_logits @ params.softmax_W
    for k in range(len(params.layers) - 1, -1, -1):
        cg = backward_sequence(params.layers[k], trace.layer_traces[k], d_hs)
        grads.layers[k] = cg.params
        d_hs = cg.d_x
    return grads


def backward(params: NetworkParams, trace: NetTrace, label: int) -> NetworkParams:
    """Gradient of one sample's cross-entropy loss."""
    if trace.batched:
        raise ValueError("batched trace; use backward_batch")
    return backward_batch(params, trace, np.atleast_1d(label))


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(params: NetworkParams, path) -> None:
    """Write ``path`` (raw little-endian float64) and ``path.txt`` (key: value header)."""
    path = Path(path)
    named = params.named()
    cfg = params.config
    header = [f"format: {CHECKPOINT_FORMAT}"]
    header += [f"{f.name}: {getattr(cfg, f.name)}" for f in dataclasses.fields(cfg)]
    header.append(f"count: {sum(a.size for a in named.values())}")
    header.append("fields: " + ",".join(f"{n}{list(a.shape)}".replace(" ", "") for n, a in named.items()))
    path.with_name(path.name + ".txt").write_text("\n".join(header) + "\n")
    with open(path, "wb") as fh:
        for a in named.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    path = Path(path)
    meta = {}
    for line in path.with_name(path.name + ".txt").read_text().splitlines():
        if line.strip():
            key, _, value = line.partition(":")
            meta[key.strip()] = value.strip()
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {meta.get('format')!r}")
    cfg = NetworkConfig(cell_kind=meta["cell_kind"], num_layers=int(meta["num_layers"]),
                        hidden_dim=int(meta["hidden_dim"]), input_dim=int(meta["input_dim"]),
                        num_classes=int(meta["num_classes"]), seed=int(meta["seed"]))
    params = NetworkParams.zeros(cfg)
    named = params.named()
    flat = np.fromfile(path, dtype="<f8")
    if flat.size != int(meta["count"]) or flat.size != sum(a.size for a in named.values()):
        raise ValueError(f"{path}: expected {meta['count']} floats, found {flat.size}")
    offsets = itertools.accumulate((a.size for a in named.values()), initial=0)
    for (name, view), start in zip(named.items(), offsets):
        view[...] = flat[start:start + view.size].reshape(view.shape)
    return params
