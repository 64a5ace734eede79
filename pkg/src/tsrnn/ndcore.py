"""Dense float64 arithmetic shared by the numerical modules.

Vectors and matrices are plain ``numpy.ndarray`` objects.  The helpers here
add shape checking and overflow-safe nonlinearities; everything else uses
numpy directly.  Most functions also accept a leading batch axis so the
recurrent cells can process a minibatch in one call.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes do not line up."""


def as_vector(values, length: int | None = None) -> np.ndarray:
    v = np.asarray(values, dtype=DTYPE)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise ShapeError(f"expected length {length}, got {v.shape[0]}")
    return v


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.asarray(values, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {m.shape[1]}")
    return m


def matvec(m, v) -> np.ndarray:
    """Matrix-vector product ``m @ v``.

    ``v`` may carry a leading batch axis, shape ``(batch, cols)``; the result
    then has shape ``(batch, rows)``.
    """
    m = np.asarray(m, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if m.ndim != 2 or v.ndim not in (1, 2) or v.shape[-1] != m.shape[1]:
        raise ShapeError(f"cannot multiply {m.shape} by {v.shape}")
    return v @ m.T


def sigmoid(v) -> np.ndarray:
    """Logistic function, two-branch form so ``exp`` never overflows."""
    v = np.asarray(v, dtype=DTYPE)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0, e) / (1.0 + e)


def tanh_vec(v) -> np.ndarray:
    return np.tanh(np.asarray(v, dtype=DTYPE))


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise product of {a.shape} and {b.shape}")
    return a * b


def log_softmax(logits) -> np.ndarray:
    """Row-wise log-softmax, stabilised by subtracting the row maximum."""
    z = np.asarray(logits, dtype=DTYPE)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))
