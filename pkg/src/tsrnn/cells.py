"""LSTM and GRU cells with forward caches and analytic backpropagation through time.

Arrays are time-major.  A sequence is ``(T, input_dim)`` or, batched,
``(T, batch, input_dim)``; hidden states follow the same layout.  Gradients
returned by :func:`backward_sequence` are sums over the batch axis.

Parameters are kept as stacked blocks (one input matrix, one recurrent matrix
and one bias per cell) so that each timestep costs a single matrix product.
The per-gate matrices are exposed as named views: ``p.W_ix`` is a view into
``p.wx`` and writing through it updates the cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndcore import DTYPE, ShapeError, sigmoid


def _block(name: str, kind: str, k: int):
    """Property returning gate block ``k`` of a stacked parameter array."""

    def get(self):
        h = self.hidden_dim
        return getattr(self, kind)[k * h:(k + 1) * h]

    def set_(self, value):
        get(self)[...] = value

    return property(get, set_, doc=f"{name} (view into ``{kind}``)")


class _CellParams:
    GATES: tuple[str, ...] = ()
    FIELDS: tuple[str, ...] = ()

    def __init__(self, wx, wh, b):
        self.wx = np.ascontiguousarray(wx, dtype=DTYPE)
        self.wh = np.ascontiguousarray(wh, dtype=DTYPE)
        self.b = np.ascontiguousarray(b, dtype=DTYPE)
        g = len(self.GATES)
        hid = self.b.shape[0] // g
        if (self.b.ndim != 1 or self.b.shape[0] != g * hid or self.wx.ndim != 2
                or self.wx.shape[0] != g * hid or self.wh.shape != (g * hid, hid)):
            raise ShapeError(
                f"inconsistent {type(self).__name__} blocks: wx {self.wx.shape}, "
                f"wh {self.wh.shape}, b {self.b.shape}")

    @property
    def hidden_dim(self) -> int:
        return self.wh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.wx.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int):
        g = len(cls.GATES)
        return cls(np.zeros((g * hidden_dim, input_dim)),
                   np.zeros((g * hidden_dim, hidden_dim)),
                   np.zeros(g * hidden_dim))

    @classmethod
    def from_named(cls, **arrays):
        """Build from per-gate arrays, e.g. ``LstmParams.from_named(W_ix=..., ...)``."""
        missing = set(cls.FIELDS) - set(arrays)
        if missing:
            raise ShapeError(f"missing fields: {sorted(missing)}")
        wx = np.vstack([np.atleast_2d(arrays[f"W_{g}x"]) for g in cls.GATES])
        wh = np.vstack([np.atleast_2d(arrays[cls._recurrent_name(g)]) for g in cls.GATES])
        b = np.concatenate([np.atleast_1d(arrays[f"b_{g}"]) for g in cls.GATES])
        return cls(wx, wh, b)

    @staticmethod
    def _recurrent_name(gate: str) -> str:
        return f"W_{gate}h"

    def named(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.FIELDS}

    def arrays(self) -> list[np.ndarray]:
        """The stacked storage arrays; optimizers update these in place."""
        return [self.wx, self.wh, self.b]

    def copy(self):
        return type(self)(self.wx.copy(), self.wh.copy(), self.b.copy())

    def zeros_like(self):
        return type(self).zeros(self.input_dim, self.hidden_dim)

    def __eq__(self, other):
        return (type(self) is type(other)
                and all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())))

    def __repr__(self):
        return f"{type(self).__name__}(input_dim={self.input_dim}, hidden_dim={self.hidden_dim})"


class LstmParams(_CellParams):
    """LSTM weights; gate blocks are stacked as i, f, o, y (sigmoid gates first)."""

    GATES = ("i", "f", "o", "y")
    FIELDS = ("W_ix", "W_ih", "W_fx", "W_fh", "W_yx", "W_yh", "W_ox", "W_oh",
              "b_i", "b_f", "b_y", "b_o")

    W_ix = _block("W_ix", "wx", 0)
    W_fx = _block("W_fx", "wx", 1)
    W_ox = _block("W_ox", "wx", 2)
    W_yx = _block("W_yx", "wx", 3)
    W_ih = _block("W_ih", "wh", 0)
    W_fh = _block("W_fh", "wh", 1)
    W_oh = _block("W_oh", "wh", 2)
    W_yh = _block("W_yh", "wh", 3)
    b_i = _block("b_i", "b", 0)
    b_f = _block("b_f", "b", 1)
    b_o = _block("b_o", "b", 2)
    b_y = _block("b_y", "b", 3)


class GruParams(_CellParams):
    """GRU weights; blocks stacked as z, r, candidate.

    The candidate's recurrent block ``W_hr`` multiplies ``r * h_prev``.
    """

    GATES = ("z", "r", "h")
    FIELDS = ("W_zx", "W_zh", "W_rx", "W_rh", "W_hx", "W_hr", "b_z", "b_r", "b_h")

    W_zx = _block("W_zx", "wx", 0)
    W_rx = _block("W_rx", "wx", 1)
    W_hx = _block("W_hx", "wx", 2)
    W_zh = _block("W_zh", "wh", 0)
    W_rh = _block("W_rh", "wh", 1)
    W_hr = _block("W_hr", "wh", 2)
    b_z = _block("b_z", "b", 0)
    b_r = _block("b_r", "b", 1)
    b_h = _block("b_h", "b", 2)

    @staticmethod
    def _recurrent_name(gate):
        return "W_hr" if gate == "h" else f"W_{gate}h"


CellParams = LstmParams | GruParams


@dataclass
class LstmTrace:
    """Activations cached by :func:`forward_sequence` for an LSTM; each is (T, ..., H)."""

    xs: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    i: np.ndarray
    f: np.ndarray
    y: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray

    @property
    def length(self) -> int:
        return self.xs.shape[0]


@dataclass
class GruTrace:
    xs: np.ndarray
    h0: np.ndarray
    z: np.ndarray
    r: np.ndarray
    candidate: np.ndarray
    h: np.ndarray

    @property
    def length(self) -> int:
        return self.xs.shape[0]


@dataclass
class CellGrads:
    """Parameter gradients (same type and shapes as the params) plus input gradients."""

    params: LstmParams | GruParams
    d_x: np.ndarray
    d_h0: np.ndarray
    d_c0: np.ndarray | None = None


def _check_state(p, x_t, h_prev):
    x_t = np.asarray(x_t, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    if x_t.shape[-1] != p.input_dim:
        raise ShapeError(f"input has {x_t.shape[-1]} features, cell expects {p.input_dim}")
    if h_prev.shape != x_t.shape[:-1] + (p.hidden_dim,):
        raise ShapeError(f"hidden state shape {h_prev.shape} does not match input {x_t.shape}")
    return x_t, h_prev


def _lstm_gates(p: LstmParams, ax, h_prev, c_prev):
    a = ax + h_prev @ p.wh.T
    hid = p.hidden_dim
    ifo = sigmoid(a[..., :3 * hid])
    i, f, o = ifo[..., :hid], ifo[..., hid:2 * hid], ifo[..., 2 * hid:]
    y = np.tanh(a[..., 3 * hid:])
    c = i * y + f * c_prev
    tanh_c = np.tanh(c)
    return i, f, y, o, c, tanh_c, o * tanh_c


def lstm_step(p: LstmParams, x_t, h_prev, c_prev):
    """One LSTM step.  Returns ``(h_t, c_t, cache)``; ``cache`` maps gate names to values."""
    x_t, h_prev = _check_state(p, x_t, h_prev)
    c_prev = np.asarray(c_prev, dtype=DTYPE)
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"cell state shape {c_prev.shape} != hidden shape {h_prev.shape}")
    i, f, y, o, c, tanh_c, h = _lstm_gates(p, x_t @ p.wx.T + p.b, h_prev, c_prev)
    return h, c, {"i": i, "f": f, "y": y, "o": o, "tanh_c": tanh_c}


def _gru_gates(p: GruParams, ax, h_prev):
    hid = p.hidden_dim
    zr = sigmoid(ax[..., :2 * hid] + h_prev @ p.wh[:2 * hid].T)
    z, r = zr[..., :hid], zr[..., hid:]
    cand = np.tanh(ax[..., 2 * hid:] + (r * h_prev) @ p.W_hr.T)
    h = z * h_prev + (1.0 - z) * cand
    return z, r, cand, h


def gru_step(p: GruParams, x_t, h_prev):
    """One GRU step.  Returns ``(h_t, cache)``."""
    x_t, h_prev = _check_state(p, x_t, h_prev)
    z, r, cand, h = _gru_gates(p, x_t @ p.wx.T + p.b, h_prev)
    return h, {"z": z, "r": r, "candidate": cand}


def forward_sequence(p, xs, h0=None, c0=None):
    """Run a cell over ``xs`` and return ``(hs, trace)``.

    ``h0`` and ``c0`` default to zeros.  ``hs`` has shape ``(T, ..., hidden_dim)``.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim < 2 or xs.shape[0] == 0:
        raise ShapeError("forward_sequence needs at least one timestep")
    if xs.shape[-1] != p.input_dim:
        raise ShapeError(f"input has {xs.shape[-1]} features, cell expects {p.input_dim}")
    state_shape = xs.shape[1:-1] + (p.hidden_dim,)
    h0 = np.zeros(state_shape) if h0 is None else np.asarray(h0, dtype=DTYPE)
    if h0.shape != state_shape:
        raise ShapeError(f"h0 shape {h0.shape}, expected {state_shape}")
    T = xs.shape[0]
    ax = xs @ p.wx.T + p.b
    hs = np.empty((T,) + state_shape)

    if isinstance(p, LstmParams):
        c0 = np.zeros(state_shape) if c0 is None else np.asarray(c0, dtype=DTYPE)
        if c0.shape != state_shape:
            raise ShapeError(f"c0 shape {c0.shape}, expected {state_shape}")
        i, f, y, o, c, tanh_c = (np.empty_like(hs) for _ in range(6))
        h_prev, c_prev = h0, c0
        for t in range(T):
            i[t], f[t], y[t], o[t], c[t], tanh_c[t], hs[t] = _lstm_gates(p, ax[t], h_prev, c_prev)
            h_prev, c_prev = hs[t], c[t]
        return hs, LstmTrace(xs, h0, c0, i, f, y, o, c, tanh_c, hs)

    if isinstance(p, GruParams):
        z, r, cand = (np.empty_like(hs) for _ in range(3))
        h_prev = h0
        for t in range(T):
            z[t], r[t], cand[t], hs[t] = _gru_gates(p, ax[t], h_prev)
            h_prev = hs[t]
        return hs, GruTrace(xs, h0, z, r, cand, hs)

    raise TypeError(f"unsupported cell parameters: {type(p).__name__}")


def _shifted(h, h0):
    """Previous-step states: ``h0, h[0], ..., h[T-2]``."""
    return np.concatenate([h0[None], h[:-1]], axis=0)


def _accumulate(p, grads, da, xs):
    """Fold stacked pre-activation cotangents ``da`` (T, ..., G*H) into ``grads``."""
    da2 = da.reshape(-1, da.shape[-1])
    grads.wx += da2.T @ xs.reshape(-1, xs.shape[-1])
    grads.b += da2.sum(axis=0)
    return da @ p.wx


def backward_sequence(p, trace, d_hs) -> CellGrads:
    """Gradients of ``sum_t <d_hs[t], h_t>`` with respect to params, inputs and h0 (and c0)."""
    d_hs = np.asarray(d_hs, dtype=DTYPE)
    if d_hs.shape != trace.h.shape:
        raise ShapeError(f"cotangent shape {d_hs.shape} does not match hidden states {trace.h.shape}")
    T = trace.length
    hid = p.hidden_dim
    grads = p.zeros_like()
    h_prev_all = _shifted(trace.h, trace.h0)

    if isinstance(p, LstmParams) and isinstance(trace, LstmTrace):
        c_prev_all = _shifted(trace.c, trace.c0)
        da = np.empty(trace.h.shape[:-1] + (4 * hid,))
        dh_next = np.zeros_like(trace.h0)
        dc_next = np.zeros_like(trace.c0)
        for t in range(T - 1, -1, -1):
            i, f, y, o, tc = trace.i[t], trace.f[t], trace.y[t], trace.o[t], trace.tanh_c[t]
            dh = d_hs[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da[t, ..., :hid] = dc * y * i * (1.0 - i)
            da[t, ..., hid:2 * hid] = dc * c_prev_all[t] * f * (1.0 - f)
            da[t, ..., 2 * hid:3 * hid] = dh * tc * o * (1.0 - o)
            da[t, ..., 3 * hid:] = dc * i * (1.0 - y * y)
            dc_next = dc * f
            dh_next = da[t] @ p.wh
        da2 = da.reshape(-1, 4 * hid)
        grads.wh += da2.T @ h_prev_all.reshape(-1, hid)
        d_x = _accumulate(p, grads, da, trace.xs)
        return CellGrads(grads, d_x, dh_next, dc_next)

    if isinstance(p, GruParams) and isinstance(trace, GruTrace):
        da = np.empty(trace.h.shape[:-1] + (3 * hid,))
        rh_all = trace.r * h_prev_all
        dh_next = np.zeros_like(trace.h0)
        w_zr = p.wh[:2 * hid]
        w_hr = p.W_hr
        for t in range(T - 1, -1, -1):
            z, r, cand, h_prev = trace.z[t], trace.r[t], trace.candidate[t], h_prev_all[t]
            dh = d_hs[t] + dh_next
            dah = dh * (1.0 - z) * (1.0 - cand * cand)
            d_rh = dah @ w_hr
            da[t, ..., :hid] = dh * (h_prev - cand) * z * (1.0 - z)
            da[t, ..., hid:2 * hid] = d_rh * h_prev * r * (1.0 - r)
            da[t, ..., 2 * hid:] = dah
            dh_next = dh * z + d_rh * r + da[t, ..., :2 * hid] @ w_zr
        da2 = da.reshape(-1, 3 * hid)
        hp2 = h_prev_all.reshape(-1, hid)
        grads.wh[:2 * hid] += da2[:, :2 * hid].T @ hp2
        grads.wh[2 * hid:] += da2[:, 2 * hid:].T @ rh_all.reshape(-1, hid)
        d_x = _accumulate(p, grads, da, trace.xs)
        return CellGrads(grads, d_x, dh_next)

    raise TypeError(f"params {type(p).__name__} do not match trace {type(trace).__name__}")
