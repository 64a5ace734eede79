"""Central finite-difference checks of the analytic cell and network gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import GruParams, LstmParams, backward_sequence, forward_sequence
from .net import NetworkConfig, backward, forward, init_params, loss

STEP = 1e-5
# Central differences at STEP carry ~1e-11 absolute noise, so entries below
# this magnitude are compared absolutely (|a - n| / ERROR_FLOOR) instead.
ERROR_FLOOR = 1e-5


@dataclass
class CheckResult:
    suite: str
    cell_kind: str
    seed: int
    max_rel_err: float
    worst: tuple[str, tuple, float, float]  # name, index, analytic, numeric
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def describe(self) -> str:
        name, idx, a, n = self.worst
        status = "ok  " if self.passed else "FAIL"
        return (f"{status} {self.suite:<5} {self.cell_kind:<4} seed={self.seed:<4} "
                f"max_rel_err={self.max_rel_err:.2e}  worst={name}{list(idx)} "
                f"analytic={a:.10g} numeric={n:.10g}")


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _compare(objective, targets, step, suite, kind, seed, tol) -> CheckResult:
    """``targets`` maps name -> (array to perturb in place, analytic gradient)."""
    worst_err, worst = -1.0, ("", (), 0.0, 0.0)
    for name, (arr, grad) in targets.items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + step
            up = objective()
            arr[idx] = old - step
            down = objective()
            arr[idx] = old
            numeric = (up - down) / (2 * step)
            err = relative_error(grad[idx], numeric)
            if err > worst_err:
                worst_err, worst = err, (name, idx, float(grad[idx]), float(numeric))
    return CheckResult(suite, kind, seed, worst_err, worst, tol)


def _corrupt(grads: dict, name: str | None):
    """Fault-injection hook: push one entry of gradient ``name`` off by 1."""
    if name in grads:
        grads[name] = grads[name].copy()
        grads[name].flat[0] += 1.0


def tensor_names(kind: str = "lstm") -> tuple[list[str], list[str]]:
    """Gradient names the cell and network suites report, for ``corrupt``."""
    cls = {"lstm": LstmParams, "gru": GruParams}[kind]
    cell = list(cls.zeros(3, 5).named()) + ["x"]
    net = list(init_params(NetworkConfig(cell_kind=kind, num_layers=2, hidden_dim=6,
                                         input_dim=2, num_classes=3)).named())
    return cell, net


def check_cell(kind: str, seed: int, T: int = 4, input_dim: int = 3, hidden_dim: int = 5,
               tol: float = 1e-5, step: float = STEP, corrupt: str | None = None) -> CheckResult:
    """Check d/dparams and d/dx of ``sum_t <w_t, h_t>`` for one random cell instance."""
    rng = np.random.default_rng(seed)
    cls = {"lstm": LstmParams, "gru": GruParams}[kind]
    p = cls.zeros(input_dim, hidden_dim)
    for a in p.arrays():
        a[...] = rng.normal(0.0, 0.5, a.shape)
    xs = rng.normal(0.0, 1.0, (T, input_dim))
    w = rng.normal(0.0, 1.0, (T, hidden_dim))

    def objective():
        return float((forward_sequence(p, xs)[0] * w).sum())

    _, trace = forward_sequence(p, xs)
    g = backward_sequence(p, trace, w)
    analytic = dict(g.params.named())
    analytic["x"] = g.d_x
    _corrupt(analytic, corrupt)
    targets = {name: (view, analytic[name]) for name, view in p.named().items()}
    targets["x"] = (xs, analytic["x"])
    return _compare(objective, targets, step, "cell", kind, seed, tol)


def check_network(kind: str, seed: int, T: int = 4, input_dim: int = 2, hidden_dim: int = 6,
                  num_layers: int = 2, num_classes: int = 3, tol: float = 1e-4,
                  step: float = STEP, corrupt: str | None = None) -> CheckResult:
    """Check the cross-entropy gradient of a small stacked network on one random sample."""
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig(cell_kind=kind, num_layers=num_layers, hidden_dim=hidden_dim,
                        input_dim=input_dim, num_classes=num_classes, seed=seed)
    params = init_params(cfg)
    for a in params.arrays():  # non-zero biases too
        a += rng.normal(0.0, 0.1, a.shape)
    xs = rng.normal(0.0, 1.0, (T, input_dim))
    label = int(rng.integers(num_classes))

    def objective():
        return loss(forward(params, xs)[0], label)

    _, trace = forward(params, xs)
    analytic = dict(backward(params, trace, label).named())
    _corrupt(analytic, corrupt)
    targets = {name: (view, analytic[name]) for name, view in params.named().items()}
    return _compare(objective, targets, step, "net", kind, seed, tol)


def run_suite(instances: int = 100, seed: int = 0, tol: float = 1e-4,
              corrupt: str | None = None, kinds=("lstm", "gru")) -> list[CheckResult]:
    """Cell and network checks for each cell kind over ``instances`` seeds.

    ``corrupt`` names a gradient tensor (cell names like ``W_fh`` or network
    names like ``layer1.W_ih``) to falsify before comparison.
    """
    if corrupt is not None:
        known = set()
        for kind in kinds:
            cell, net = tensor_names(kind)
            known.update(cell, net)
        if corrupt not in known:
            raise KeyError(f"no gradient named {corrupt!r}; choose from {sorted(known)}")
    results = []
    for kind in kinds:
        for s in range(seed, seed + instances):
            results.append(check_cell(kind, s, tol=tol, corrupt=corrupt))
            results.append(check_network(kind, s, tol=tol, corrupt=corrupt))
    return results
