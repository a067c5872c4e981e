import numpy as np
import numpy.testing as npt
import pytest

from skycast import optim
from skycast import tensor as T
from skycast.errors import NumericError
from skycast.optim import Adam, AdamConfig, LossConfig
from skycast.tensor import Parameter, Tape, Tensor


def scalar_loss(truth, pred, m=1.0):
    return optim.logcosh_loss(Tensor(np.atleast_1d(truth)), Tensor(np.atleast_1d(pred)),
                              LossConfig(m=m)).item()


def test_logcosh_zero_error_is_log_m():
    assert scalar_loss(100.0, 100.0) == 0.0
    npt.assert_allclose(scalar_loss(100.0, 100.0, m=2.0), np.log(2.0), rtol=1e-12)


def test_logcosh_large_error_asymptote():
    # for e = 10, log cosh e -> e - log 2
    npt.assert_allclose(scalar_loss(10.0, 0.0), 10.0 - np.log(2.0), atol=1e-3)


def test_logcosh_small_error_taylor():
    # for e = 0.1, log cosh e ~= e^2 / 2
    got = scalar_loss(0.1, 0.0)
    npt.assert_allclose(got, 0.0049917, atol=1e-6)
    npt.assert_allclose(got, 0.1 ** 2 / 2.0, rtol=2e-3)


def test_logcosh_symmetric_and_nonnegative():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = rng.uniform(-100, 100, size=4)
        p = rng.uniform(-100, 100, size=4)
        a = optim.logcosh_loss(Tensor(r), Tensor(p)).item()
        b = optim.logcosh_loss(Tensor(p), Tensor(r)).item()
        npt.assert_allclose(a, b, rtol=1e-12)
        assert a >= 0.0


def test_logcosh_no_overflow_at_huge_errors():
    loss = scalar_loss(1e6, 0.0)
    assert np.isfinite(loss)
    npt.assert_allclose(loss, 1e6 - np.log(2.0), rtol=1e-12)


def test_l2_penalty_values():
    w = Parameter("w", Tensor(np.array([[3.0, 4.0]])))
    b = Parameter("b", Tensor(np.array([7.0])), decay=False)
    assert optim.l2_penalty([w, b], 0.0).item() == 0.0
    assert optim.l2_penalty([w, b], 1.0).item() == 25.0
    assert optim.l2_penalty([w, b], 0.5).item() == 12.5


def test_l2_penalty_gradient_is_2_coeff_theta():
    rng = np.random.default_rng(1)
    w = Parameter("w", Tensor(rng.uniform(-2, 2, size=(3, 2))))
    coeff = 0.7
    err = T.grad_check(lambda t: optim.l2_penalty([Parameter("w", t)], coeff), [w.tensor])
    assert err < 1e-4
    with Tape() as tape:
        grads = tape.gradients(optim.l2_penalty([w], coeff), [w])
    npt.assert_allclose(grads["w"], 2.0 * coeff * w.tensor.data, rtol=1e-12)


def test_adam_zero_gradients_noop_but_counts():
    p = Parameter("p", Tensor(np.array([1.0, -2.0])))
    before = p.tensor.data.copy()
    opt = Adam([p])
    opt.step({"p": np.zeros(2)})
    npt.assert_array_equal(p.tensor.data, before)
    assert opt.step_count == 1


def test_adam_first_step_sign_property():
    rng = np.random.default_rng(2)
    p = Parameter("p", Tensor(rng.standard_normal(5)))
    g = rng.standard_normal(5)
    before = p.tensor.data.copy()
    lr = 0.01
    Adam([p], AdamConfig(learning_rate=lr)).step({"p": g})
    delta = p.tensor.data - before
    npt.assert_array_equal(np.sign(delta), -np.sign(g))
    npt.assert_allclose(np.abs(delta), lr, rtol=1e-6)


def test_adam_converges_on_1d_quadratic():
    p = Parameter("x", Tensor(np.array([0.0])))
    opt = Adam([p], AdamConfig(learning_rate=0.1, decay=1.0))
    for _ in range(500):
        grad = 2.0 * (p.tensor.data - 3.0)
        opt.step({"x": grad})
    assert abs(p.tensor.data[0] - 3.0) < 1e-3


def test_adam_nan_gradient_aborts():
    p = Parameter("p", Tensor(np.array([1.0])))
    opt = Adam([p])
    with pytest.raises(NumericError):
        opt.step({"p": np.array([np.nan])})


def test_learning_rate_strictly_decreasing():
    opt = Adam([Parameter("p", Tensor(np.zeros(1)))], AdamConfig(learning_rate=1e-3, decay=0.95))
    rates = [opt.learning_rate_for_epoch(e) for e in range(10)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    npt.assert_allclose(rates[3], 1e-3 * 0.95 ** 3, rtol=1e-12)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(m=0.0)
    with pytest.raises(ValueError):
        LossConfig(l2_coefficient=-1.0)


@pytest.mark.parametrize("seed", range(5))
def test_logcosh_loss_grad_check(seed):
    rng = np.random.default_rng(seed)
    truth = Tensor(rng.uniform(-2, 2, size=6))
    pred = Tensor(rng.uniform(-2, 2, size=6))
    err = T.grad_check(lambda t, p: optim.logcosh_loss(t, p), [truth, pred])
    assert err < 1e-4
