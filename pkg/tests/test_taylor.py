import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadrep import taylor
from quadrep._common import ConfigError, NumericalError, stream
from quadrep.losses import LogCosh, Logistic, get_loss
from quadrep.taylor import (Regularizer, RegularizedRisk, TaylorModel, empirical_risk, forward,
                            hessian_quadratic_form, hessian_vector_product, init_taylor_model, norm24,
                            reg_value_and_grad, risk_grad)
from quadrep.verify import _random_instance, gradient_fd_error, hessian_fd_error


def _hand_model(kind):
    W0 = np.tile([1.0, 0.0], (4, 1))
    W = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    return TaylorModel(kind, W0, np.array([1.0, 1.0, -1.0, -1.0]), W)


def test_forward_hand_computed():
    h = np.array([1.0, 2.0])
    # (1 + 4 - 9 - 0) / (2 * sqrt 4)
    assert forward(_hand_model("quadratic"), h) == pytest.approx(-1.0)
    # (1 + 2 - 3 - 0) * relu(1) / sqrt 4
    assert forward(_hand_model("linearized"), h) == pytest.approx(0.0)
    # gates closed when w0 . h < 0
    assert forward(_hand_model("quadratic"), -h) == pytest.approx(0.0)


def test_model_validation():
    with pytest.raises(ConfigError):
        TaylorModel("cubic", np.zeros((2, 2)), np.ones(2), np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        TaylorModel("quadratic", np.zeros((2, 2)), np.ones(3), np.zeros((2, 2)))
    m = init_taylor_model(6, 3, seed=1)
    assert np.all(m.W == 0) and set(np.unique(m.a)) <= {-1.0, 1.0}


@pytest.mark.parametrize("kind", ["quadratic", "linearized"])
@pytest.mark.parametrize("loss_name", ["logcosh", "logistic"])
@given(seed=st.integers(0, 2**31 - 1))
def test_gradient_matches_central_differences(kind, loss_name, seed):
    rng = np.random.default_rng(seed)
    assert gradient_fd_error(*_random_instance(rng, kind, loss_name), rng) <= 1e-5


@pytest.mark.parametrize("kind", ["quadratic", "linearized"])
@pytest.mark.parametrize("loss_name", ["logcosh", "logistic"])
@given(seed=st.integers(0, 2**31 - 1))
def test_hessian_form_matches_second_differences(kind, loss_name, seed):
    rng = np.random.default_rng(seed)
    model, loss, H, y = _random_instance(rng, kind, loss_name)
    V = rng.standard_normal(model.W.shape)
    assert hessian_fd_error(model, loss, H, y, V / np.linalg.norm(V)) <= 1e-4


@given(seed=st.integers(0, 2**31 - 1))
def test_hvp_is_symmetric_and_consistent(seed):
    rng = np.random.default_rng(seed)
    model, loss, H, y = _random_instance(rng, "quadratic", "logcosh")
    U, V = rng.standard_normal((2, *model.W.shape))
    HU, HV = hessian_vector_product(model, loss, H, y, U), hessian_vector_product(model, loss, H, y, V)
    assert np.sum(V * HU) == pytest.approx(np.sum(U * HV), rel=1e-9, abs=1e-12)
    assert np.sum(V * HV) == pytest.approx(hessian_quadratic_form(model, loss, H, y, V), rel=1e-9, abs=1e-12)


def test_sign_error_in_gauss_newton_term_is_caught(monkeypatch):
    real = taylor._hessian_terms

    def mutated(*args):
        curv, gn = real(*args)
        return curv, -gn

    rng = np.random.default_rng(0)
    model, loss, H, y = _random_instance(rng, "quadratic", "logcosh")
    V = rng.standard_normal(model.W.shape)
    assert hessian_fd_error(model, loss, H, y, V) <= 1e-4
    monkeypatch.setattr(taylor, "_hessian_terms", mutated)
    assert hessian_fd_error(model, loss, H, y, V) > 1e-2


@pytest.mark.parametrize("kind", ["norm24", "data_dependent", "frobenius"])
def test_regularizer_derivatives(kind):
    rng = stream(5, "reg")
    W, V = rng.standard_normal((2, 4, 3))
    A = rng.standard_normal((3, 3))
    reg = Regularizer(kind, 0.3, A @ A.T if kind == "data_dependent" else None)
    val, G = reg_value_and_grad(reg, W)
    t = 1e-6
    fd = (reg.value(W + t * V) - reg.value(W - t * V)) / (2 * t)
    assert np.sum(G * V) == pytest.approx(fd, rel=1e-6)
    t = 1e-3
    fd2 = (reg.value(W + t * V) - 2 * val + reg.value(W - t * V)) / t**2
    assert reg.hess_form(W, V) == pytest.approx(fd2, rel=1e-5)
    assert np.sum(V * reg.hvp(W, V)) == pytest.approx(reg.hess_form(W, V), rel=1e-12)


def test_norm24_and_regularizer_values():
    W = np.array([[3.0, 4.0], [0.0, 1.0]])
    assert norm24(W) == pytest.approx((625 + 1) ** 0.25)
    assert Regularizer("norm24", 2.0).value(W) == pytest.approx(2.0 * 626)
    assert Regularizer("frobenius", 0.5).value(W) == pytest.approx(13.0)
    assert Regularizer("data_dependent", 1.0, np.eye(2)).value(W) == pytest.approx(626)
    with pytest.raises(ConfigError):
        Regularizer("data_dependent", 1.0)
    with pytest.raises(ConfigError):
        Regularizer("norm24", -1.0)


def test_regularized_risk_agrees_with_free_functions():
    rng = np.random.default_rng(3)
    model, loss, H, y = _random_instance(rng, "quadratic", "logistic")
    reg = Regularizer("norm24", 0.05)
    obj = RegularizedRisk(model, loss, H, y, reg)
    W = model.W
    assert obj.plain_value(W) == pytest.approx(empirical_risk(model, loss, H, y))
    np.testing.assert_allclose(obj.grad(W), risk_grad(model, loss, H, y) + reg.grad(W), rtol=1e-12)
    V = rng.standard_normal(W.shape)
    assert obj.hess_form(W, V) == pytest.approx(hessian_quadratic_form(model, loss, H, y, V) + reg.hess_form(W, V))
    with pytest.raises(ConfigError):
        RegularizedRisk(model, loss, H[:, :1], y)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_objective_raises():
    model = init_taylor_model(2, 2, seed=0)
    obj = RegularizedRisk(model, get_loss("logcosh"), np.ones((3, 2)), np.zeros(3), Regularizer("norm24", 1.0))
    with pytest.raises(NumericalError):
        obj.value(np.full((2, 2), 1e200))


@given(st.floats(-50, 50), st.floats(-1.3, 1.3))
def test_logcosh_derivatives(z, y):
    loss = LogCosh()
    t = 1e-6
    assert loss.d1(z, y) == pytest.approx((loss.value(z + t, y) - loss.value(z - t, y)) / (2 * t), abs=1e-6)
    assert loss.d2(z, y) == pytest.approx((loss.d1(z + t, y) - loss.d1(z - t, y)) / (2 * t), abs=1e-5)
    assert loss.value(z, y) >= 0.0


@given(st.floats(-50, 50), st.sampled_from([-1.0, 1.0]))
def test_logistic_derivatives(z, y):
    loss = Logistic()
    t = 1e-6
    assert loss.d1(z, y) == pytest.approx((loss.value(z + t, y) - loss.value(z - t, y)) / (2 * t), abs=1e-6)
    assert loss.d2(z, y) == pytest.approx((loss.d1(z + t, y) - loss.d1(z - t, y)) / (2 * t), abs=1e-5)


def test_loss_lookup():
    assert isinstance(get_loss("logistic"), Logistic)
    with pytest.raises(ConfigError):
        get_loss("hinge")
