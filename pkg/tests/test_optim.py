import math

import numpy as np
import pytest

from tsrnn.net import NetworkConfig, init_params
from tsrnn.optim import NonFiniteGradientError, Rmsprop


def test_defaults():
    opt = Rmsprop()
    assert (opt.base_rate, opt.decay, opt.rho, opt.epsilon) == (5e-4, 5e-5, 0.9, 1e-8)
    assert opt.clip_norm is None


def test_two_steps_by_hand():
    opt = Rmsprop(base_rate=0.1, decay=0.5, rho=0.9, epsilon=1e-8)
    p = [np.array([1.0, -2.0])]
    g1 = np.array([0.5, 0.0])
    opt.apply_update(p, [g1])
    acc = 0.1 * 0.25
    assert p[0][0] == pytest.approx(1.0 - 0.1 * 0.5 / (math.sqrt(acc) + 1e-8), abs=1e-15)
    assert p[0][1] == -2.0
    x1 = p[0][0]
    opt.apply_update(p, [np.array([-1.0, 0.0])])
    acc = 0.9 * acc + 0.1 * 1.0
    rate = 0.1 / (1 + 0.5 * 1)
    assert p[0][0] == pytest.approx(x1 + rate * 1.0 / (math.sqrt(acc) + 1e-8), abs=1e-15)
    assert opt.iteration == 2


def test_rate_schedule():
    opt = Rmsprop(base_rate=5e-4, decay=5e-5)
    opt.iteration = 20000
    assert opt.effective_rate == pytest.approx(2.5e-4)


def test_first_step_size_is_rate_over_sqrt_one_minus_rho():
    opt = Rmsprop(base_rate=0.01)
    p = [np.zeros(3)]
    opt.apply_update(p, [np.array([3.0, -0.2, 1e-3])])
    np.testing.assert_allclose(np.abs(p[0]), 0.01 / math.sqrt(0.1), rtol=1e-4)


def test_clip_scales_global_norm():
    g = [np.array([3.0]), np.array([4.0])]
    a, b = Rmsprop(base_rate=1.0, clip_norm=1.0), Rmsprop(base_rate=1.0)
    pa, pb = [np.zeros(1), np.zeros(1)], [np.zeros(1), np.zeros(1)]
    a.apply_update(pa, g)
    b.apply_update(pb, [x / 5.0 for x in g])
    np.testing.assert_array_equal(pa[0], pb[0])
    np.testing.assert_array_equal(pa[1], pb[1])


def test_nonfinite_gradient_rejected_without_update():
    params = init_params(NetworkConfig(num_layers=1, hidden_dim=3, num_classes=2))
    before = params.copy()
    grads = params.zeros_like()
    grads.layers[0].W_rh[1, 2] = np.nan
    opt = Rmsprop()
    with pytest.raises(NonFiniteGradientError) as err:
        opt.apply_update(params, grads)
    assert "layer0.W_rh[1, 2]" in str(err.value)
    assert params == before and opt.iteration == 0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        Rmsprop().apply_update([np.zeros(2)], [np.zeros(3)])


def test_version_bumped_and_copy_independent():
    params = init_params(NetworkConfig(num_layers=1, hidden_dim=3, num_classes=2))
    opt = Rmsprop()
    v = params.version
    opt.apply_update(params, params.zeros_like())
    assert params.version == v + 1
    twin = opt.copy()
    twin.accumulators[0] += 1.0
    assert not np.array_equal(twin.accumulators[0], opt.accumulators[0])
