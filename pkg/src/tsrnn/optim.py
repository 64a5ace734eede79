"""RMSprop with inverse-time learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN or Inf; the update was not applied."""

    def __init__(self, report: list[tuple[str, tuple[int, ...], float]]):
        self.report = report
        lines = [f"{name}{list(idx)} = {val}" for name, idx, val in report[:10]]
        more = f" (+{len(report) - 10} more)" if len(report) > 10 else ""
        super().__init__("non-finite gradient entries: " + "; ".join(lines) + more)


@dataclass
class Rmsprop:
    """Optimizer state.

    ``effective_rate = base_rate / (1 + decay * iteration)``; epsilon is added
    outside the square root.  ``clip_norm`` (global L2 norm over all
    gradients) is off when ``None``.
    """

    base_rate: float = 5e-4
    decay: float = 5e-5
    rho: float = 0.9
    epsilon: float = 1e-8
    clip_norm: float | None = None
    iteration: int = 0
    accumulators: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def effective_rate(self) -> float:
        return self.base_rate / (1.0 + self.decay * self.iteration)

    def apply_update(self, params, grads) -> None:
        """Update ``params`` in place from ``grads``.

        Both arguments expose ``arrays()`` returning matching lists of arrays
        (``NetworkParams``, cell params) or are plain lists of arrays.
        """
        p_arrays = _arrays(params)
        g_arrays = _arrays(grads)
        if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
            raise ValueError("gradient shapes do not mirror parameter shapes")
        bad = _nonfinite_report(grads, g_arrays)
        if bad:
            raise NonFiniteGradientError(bad)
        if self.accumulators is None:
            self.accumulators = [np.zeros_like(p) for p in p_arrays]
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.vdot(g, g)) for g in g_arrays))
            if total > self.clip_norm:
                g_arrays = [g * (self.clip_norm / total) for g in g_arrays]
        rate = self.effective_rate
        for p, g, acc in zip(p_arrays, g_arrays, self.accumulators):
            acc *= self.rho
            acc += (1.0 - self.rho) * (g * g)
            p -= rate * g / (np.sqrt(acc) + self.epsilon)
        self.iteration += 1
        if hasattr(params, "version"):
            params.version += 1

    def copy(self) -> "Rmsprop":
        acc = None if self.accumulators is None else [a.copy() for a in self.accumulators]
        return Rmsprop(self.base_rate, self.decay, self.rho, self.epsilon, self.clip_norm,
                       self.iteration, acc)


def _arrays(obj) -> list[np.ndarray]:
    return obj.arrays() if hasattr(obj, "arrays") else list(obj)


def _nonfinite_report(grads, g_arrays):
    """Locate NaN/Inf entries, by named gate view when the container has them."""
    if all(np.isfinite(g).all() for g in g_arrays):
        return []
    if hasattr(grads, "named"):
        items = grads.named().items()
    else:
        items = ((f"array{k}", g) for k, g in enumerate(g_arrays))
    report = []
    for name, g in items:
        if not np.isfinite(g).all():
            for idx in zip(*np.nonzero(~np.isfinite(g))):
                report.append((name, tuple(int(i) for i in idx), float(g[idx])))
    return report
