import numpy as np
import pytest

from tsrnn.cells import (GruParams, LstmParams, backward_sequence, forward_sequence, gru_step,
                         lstm_step)
from tsrnn.gradcheck import check_cell
from tsrnn.ndcore import ShapeError, sigmoid


def random_params(cls, rng, input_dim=3, hidden_dim=5, scale=0.5):
    p = cls.zeros(input_dim, hidden_dim)
    for a in p.arrays():
        a[...] = rng.normal(0.0, scale, a.shape)
    return p


def naive_lstm_step(p, x, h, c):
    """Per-gate transcription with no stacking, as an independent reference."""
    i = sigmoid(p.W_ix @ x + p.W_ih @ h + p.b_i)
    f = sigmoid(p.W_fx @ x + p.W_fh @ h + p.b_f)
    y = np.tanh(p.W_yx @ x + p.W_yh @ h + p.b_y)
    o = sigmoid(p.W_ox @ x + p.W_oh @ h + p.b_o)
    c_new = i * y + f * c
    return o * np.tanh(c_new), c_new


def naive_gru_step(p, x, h):
    z = sigmoid(p.W_zx @ x + p.W_zh @ h + p.b_z)
    r = sigmoid(p.W_rx @ x + p.W_rh @ h + p.b_r)
    cand = np.tanh(p.W_hx @ x + p.W_hr @ (r * h) + p.b_h)
    return z * h + (1 - z) * cand


def test_lstm_step_matches_naive():
    rng = np.random.default_rng(3)
    p = random_params(LstmParams, rng)
    x, h, c = rng.normal(size=3), rng.normal(size=5), rng.normal(size=5)
    h1, c1, cache = lstm_step(p, x, h, c)
    rh, rc = naive_lstm_step(p, x, h, c)
    np.testing.assert_allclose(h1, rh, atol=1e-15)
    np.testing.assert_allclose(c1, rc, atol=1e-15)
    assert set(cache) == {"i", "f", "y", "o", "tanh_c"}


def test_gru_step_matches_naive():
    rng = np.random.default_rng(4)
    p = random_params(GruParams, rng)
    x, h = rng.normal(size=3), rng.normal(size=5)
    h1, _ = gru_step(p, x, h)
    np.testing.assert_allclose(h1, naive_gru_step(p, x, h), atol=1e-15)


@pytest.mark.parametrize("cls", [LstmParams, GruParams])
def test_sequence_matches_steps_and_batch(cls):
    rng = np.random.default_rng(5)
    p = random_params(cls, rng)
    xs = rng.normal(size=(6, 4, 3))  # T, batch, input
    hs, _ = forward_sequence(p, xs)
    for b in range(4):
        h, c = np.zeros(5), np.zeros(5)
        for t in range(6):
            if cls is LstmParams:
                h, c = naive_lstm_step(p, xs[t, b], h, c)
            else:
                h = naive_gru_step(p, xs[t, b], h)
            np.testing.assert_allclose(hs[t, b], h, atol=1e-14)


@pytest.mark.parametrize("cls", [LstmParams, GruParams])
def test_zero_params_fixed_point(cls):
    p = cls.zeros(3, 5)
    hs, _ = forward_sequence(p, np.random.default_rng(0).normal(size=(7, 3)))
    assert np.all(hs == 0.0)


def test_lstm_memory_pass_through():
    p = LstmParams.zeros(2, 4)
    p.b_f[...] = 50.0   # forget gate saturated open
    p.b_i[...] = -50.0  # input gate saturated closed
    c0 = np.array([0.3, -1.2, 2.0, 0.0])
    _, trace = forward_sequence(p, np.random.default_rng(1).normal(size=(5, 2)), c0=c0)
    prev = c0
    for t in range(5):
        np.testing.assert_allclose(trace.c[t], prev, rtol=0, atol=1e-12)
        prev = trace.c[t]


def test_gru_carry_over():
    p = GruParams.zeros(2, 4)
    p.b_z[...] = 50.0
    h0 = np.array([0.5, -0.25, 1.0, -2.0])
    hs, _ = forward_sequence(p, np.random.default_rng(2).normal(size=(5, 2)), h0=h0)
    prev = h0
    for t in range(5):
        np.testing.assert_allclose(hs[t], prev, rtol=0, atol=1e-12)
        prev = hs[t]


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_backward_matches_finite_differences(kind):
    results = [check_cell(kind, seed, tol=1e-5) for seed in range(100)]
    failures = [r.describe() for r in results if not r.passed]
    assert not failures, "\n".join(failures)


def test_gradients_sum_over_batch():
    rng = np.random.default_rng(7)
    p = random_params(GruParams, rng)
    xs = rng.normal(size=(4, 3, 3))
    w = rng.normal(size=(4, 3, 5))
    _, tr = forward_sequence(p, xs)
    full = backward_sequence(p, tr, w)
    parts = []
    for b in range(3):
        _, tb = forward_sequence(p, xs[:, b])
        parts.append(backward_sequence(p, tb, w[:, b]))
    for name, g in full.params.named().items():
        np.testing.assert_allclose(g, sum(pt.params.named()[name] for pt in parts), atol=1e-12)
    np.testing.assert_allclose(full.d_x[:, 1], parts[1].d_x, atol=1e-14)


def test_lstm_initial_state_gradients():
    rng = np.random.default_rng(8)
    p = random_params(LstmParams, rng)
    xs = rng.normal(size=(3, 3))
    h0, c0 = rng.normal(size=5), rng.normal(size=5)
    w = rng.normal(size=(3, 5))
    _, tr = forward_sequence(p, xs, h0, c0)
    g = backward_sequence(p, tr, w)

    def obj(h, c):
        return float((forward_sequence(p, xs, h, c)[0] * w).sum())

    eps = 1e-6
    for k in range(5):
        e = np.zeros(5)
        e[k] = eps
        assert abs((obj(h0 + e, c0) - obj(h0 - e, c0)) / (2 * eps) - g.d_h0[k]) < 1e-8
        assert abs((obj(h0, c0 + e) - obj(h0, c0 - e)) / (2 * eps) - g.d_c0[k]) < 1e-8


def test_named_views_alias_storage():
    p = LstmParams.zeros(2, 3)
    p.W_fh[0, 1] = 7.0
    assert p.wh[3 + 0, 1] == 7.0
    assert list(p.named()) == list(LstmParams.FIELDS)
    q = GruParams.from_named(**{n: np.full(a.shape, k, float) for k, (n, a) in
                                 enumerate(GruParams.zeros(2, 3).named().items())})
    assert q.W_hr[0, 0] == GruParams.FIELDS.index("W_hr")


def test_shape_errors():
    p = LstmParams.zeros(3, 5)
    with pytest.raises(ShapeError):
        forward_sequence(p, np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        lstm_step(p, np.zeros(3), np.zeros(4), np.zeros(5))
    with pytest.raises(ShapeError):
        forward_sequence(p, np.zeros((0, 3)))
    _, tr = forward_sequence(p, np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        backward_sequence(p, tr, np.zeros((3, 5)))
