"""Confusion matrix, overall accuracy, Cohen's kappa and F-measures.

Each statistic is formed from integer counts and a single final division, so
it is the correctly rounded value of the exact rational.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (k, k) int64; rows = true class, columns = predicted
    labels: tuple = ()

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.shape != (k, k) or (self.counts < 0).any():
            raise ValueError("confusion counts must be a non-negative square matrix")
        if not self.labels:
            self.labels = tuple(range(k))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("true\\pred," + ",".join(str(l) for l in self.labels) + "\n")
        for lab, row in zip(self.labels, self.counts):
            buf.write(f"{lab}," + ",".join(str(int(v)) for v in row) + "\n")
        return buf.getvalue()


def confusion(true_labels, predicted_labels, k: int, labels=()) -> ConfusionMatrix:
    """Count (true, predicted) pairs; labels are 0-based class indices below ``k``."""
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"{t.size} true labels but {p.size} predictions")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} label outside [0, {k})")
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, tuple(labels) or tuple(range(k)))


def _require_total(cm: ConfusionMatrix) -> int:
    n = cm.total
    if n <= 0:
        raise ValueError("metric undefined on an empty confusion matrix")
    return n


def accuracy(cm: ConfusionMatrix) -> float:
    n = _require_total(cm)
    return int(np.trace(cm.counts)) / n


def kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa; 0 when chance agreement is already 1."""
    n = _require_total(cm)
    agree = int(np.trace(cm.counts))
    chance = sum(int(r) * int(c) for r, c in zip(cm.row_sums, cm.col_sums))
    denom = n * n - chance
    if denom == 0:
        return 0.0
    return (n * agree - chance) / denom


def f_measure(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class F1 and their unweighted mean over classes present in the truth.

    ``F1 = 2 tp / (row + col)``, which equals ``2PR / (P + R)``; it is 0 when
    the class is neither present nor predicted.
    """
    _require_total(cm)
    tp = np.diag(cm.counts)
    rows, cols = cm.row_sums, cm.col_sums
    per_class = np.array([2 * int(t) / (int(r) + int(c)) if r + c > 0 else 0.0
                          for t, r, c in zip(tp, rows, cols)])
    present = rows > 0
    return per_class, float(per_class[present].mean())


def f_weighted(cm: ConfusionMatrix) -> float:
    per_class, _ = f_measure(cm)
    rows = cm.row_sums
    return float((per_class * rows).sum() / rows.sum())


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    kappa: float
    f_per_class: np.ndarray
    f_macro: float
    f_weighted: float
    class_names: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "labels": [int(l) if isinstance(l, (int, np.integer)) else l for l in self.confusion.labels],
            "confusion": self.confusion.counts.tolist(),
            "total": self.confusion.total,
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "f_per_class": [float(v) for v in self.f_per_class],
            "f_macro": self.f_macro,
            "f_weighted": self.f_weighted,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def to_text(self, title: str = "") -> str:
        labels = self.confusion.labels
        width = max(8, *(len(str(l)) + 2 for l in labels))
        out = [title] if title else []
        out.append(f"accuracy   {self.accuracy:.4f}")
        out.append(f"kappa      {self.kappa:.4f}")
        out.append(f"F1 macro   {self.f_macro:.4f}")
        out.append(f"F1 weighted {self.f_weighted:.4f}")
        out.append("")
        out.append(f"{'class':<12}{'F1':>8}{'support':>10}")
        for lab, f, n in zip(labels, self.f_per_class, self.confusion.row_sums):
            name = self.class_names.get(lab, str(lab))
            out.append(f"{name:<12}{f:>8.4f}{int(n):>10}")
        out.append("")
        out.append("confusion (rows true, columns predicted)")
        out.append(" " * 12 + "".join(f"{str(l):>{width}}" for l in labels))
        for lab, row in zip(labels, self.confusion.counts):
            name = self.class_names.get(lab, str(lab))
            out.append(f"{name:<12}" + "".join(f"{int(v):>{width}}" for v in row))
        return "\n".join(out) + "\n"


def evaluate(true_labels, predicted_labels, k: int, labels=(), class_names=None) -> EvalReport:
    cm = confusion(true_labels, predicted_labels, k, labels)
    per_class, macro = f_measure(cm)
    return EvalReport(cm, accuracy(cm), kappa(cm), per_class, macro, f_weighted(cm),
                      dict(class_names or {}))
