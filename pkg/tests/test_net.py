import math

import numpy as np
import pytest

from tsrnn.gradcheck import check_network
from tsrnn.ndcore import ShapeError
from tsrnn.net import (NetworkConfig, NetworkParams, backward, backward_batch, batch_loss, forward,
                       forward_batch, init_params, load_checkpoint, loss, predict, save_checkpoint)
from tsrnn.optim import Rmsprop

TINY = dict(num_layers=2, hidden_dim=6, input_dim=2, num_classes=3)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_network_gradient_matches_finite_differences(kind):
    results = [check_network(kind, seed, tol=1e-4) for seed in range(20)]
    failures = [r.describe() for r in results if not r.passed]
    assert not failures, "\n".join(failures)


def test_defaults():
    cfg = NetworkConfig()
    assert (cfg.num_layers, cfg.hidden_dim, cfg.num_classes) == (5, 512, 5)
    assert NetworkConfig.desk().hidden_dim == 32 and NetworkConfig.desk().num_layers == 2


@pytest.mark.parametrize("bad", [dict(num_layers=0), dict(num_classes=1), dict(cell_kind="rnn")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        NetworkConfig(**bad)


def test_init_glorot_zero_biases():
    p = init_params(NetworkConfig(cell_kind="lstm", **TINY))
    for name, a in p.named().items():
        if ".b_" in name or name == "softmax_b":
            assert np.all(a == 0.0), name
        else:
            rows, cols = a.shape
            assert np.abs(a).max() <= math.sqrt(6 / (rows + cols)), name
    assert p == init_params(NetworkConfig(cell_kind="lstm", **TINY))
    assert p != init_params(NetworkConfig(cell_kind="lstm", seed=1, **TINY))


def test_zero_params_uniform_prediction():
    cfg = NetworkConfig(**TINY)
    pred, _ = forward(NetworkParams.zeros(cfg), np.ones((4, 2)))
    np.testing.assert_allclose(pred.probs, 1 / 3, atol=1e-15)
    assert loss(pred, 0) == pytest.approx(math.log(3), abs=1e-15)


def test_probabilities_normalised_and_batch_consistent():
    rng = np.random.default_rng(0)
    p = init_params(NetworkConfig(**TINY))
    X = rng.normal(size=(7, 5, 2))
    probs, trace = forward_batch(p, X)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-14)
    for k in range(7):
        pred, _ = forward(p, X[k])
        np.testing.assert_allclose(pred.probs, probs[k], atol=1e-14)
    np.testing.assert_allclose(predict(p, X, batch_size=3), probs, atol=1e-15)


def test_batch_gradient_is_mean_of_sample_gradients():
    rng = np.random.default_rng(1)
    p = init_params(NetworkConfig(cell_kind="lstm", **TINY))
    X = rng.normal(size=(4, 3, 2))
    y = np.array([0, 2, 1, 2])
    _, tr = forward_batch(p, X)
    g = backward_batch(p, tr, y)
    singles = []
    for k in range(4):
        _, t = forward(p, X[k])
        singles.append(backward(p, t, int(y[k])))
    for a, *parts in zip(g.arrays(), *(s.arrays() for s in singles)):
        np.testing.assert_allclose(a, sum(parts) / 4, atol=1e-14)
    assert batch_loss(tr.log_probs, y) == pytest.approx(
        np.mean([loss(forward(p, X[k])[0], int(y[k])) for k in range(4)]), abs=1e-14)


def test_stale_trace_rejected():
    p = init_params(NetworkConfig(**TINY))
    _, tr = forward(p, np.zeros((3, 2)))
    g = backward(p, tr, 1)
    Rmsprop().apply_update(p, g)
    with pytest.raises(ValueError, match="since-updated"):
        backward(p, tr, 1)
    with pytest.raises(ValueError):
        backward(p.copy(), forward(p, np.zeros((3, 2)))[1], 1)


def test_input_and_label_validation():
    p = init_params(NetworkConfig(**TINY))
    with pytest.raises(ShapeError):
        forward(p, np.zeros((3, 4)))
    pred, tr = forward(p, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        loss(pred, 3)
    with pytest.raises(ValueError):
        backward(p, tr, -1)
    _, btr = forward_batch(p, np.zeros((2, 3, 2)))
    with pytest.raises(ValueError, match="batched"):
        backward(p, btr, 0)


def test_extreme_logits_stay_finite():
    cfg = NetworkConfig(**TINY)
    p = NetworkParams.zeros(cfg)
    p.softmax_b[...] = [2000.0, -2000.0, 0.0]
    pred, _ = forward(p, np.zeros((2, 2)))
    assert np.isfinite(loss(pred, 1)) and loss(pred, 1) == pytest.approx(4000.0)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_checkpoint_roundtrip(tmp_path, kind):
    p = init_params(NetworkConfig(cell_kind=kind, seed=3, **TINY))
    p.softmax_b[...] = [0.1, -0.2, 1e-300]
    save_checkpoint(p, tmp_path / "m.bin")
    q = load_checkpoint(tmp_path / "m.bin")
    assert q == p and q.config == p.config
    header = (tmp_path / "m.bin.txt").read_text()
    assert header.startswith("format: tsrnn-checkpoint/1") and f"cell_kind: {kind}" in header


def test_checkpoint_truncated(tmp_path):
    p = init_params(NetworkConfig(**TINY))
    save_checkpoint(p, tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "m.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="expected"):
        load_checkpoint(tmp_path / "m.bin")
