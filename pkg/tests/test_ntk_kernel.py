import math

import numpy as np
import pytest

from quadrep._common import ConfigError, NumericalError, stream
from quadrep.features import sphere_points
from quadrep.ntk_kernel import (DEFAULT_LAMBDA_GRID, InfiniteKernel, finite_width_ntk, gegenbauer_sq_norm,
                                gegenbauer_target, h_infinity, kernel_ridge_fit, lower_bound_run, sigma12,
                                write_lambda_table)

# Sigma12 * E[relu(u) relu(v)] with the expectation integrated numerically (scipy dblquad), frozen
H_INF_ORACLE = {-1.0: 0.03806235833893878, 0.0: 0.060453376293395485, 0.5: 0.07732734192748747}

# E[C_p^{(d-2)/2}(t)^2] under the sphere marginal, 30-digit quadrature (mpmath), frozen
GEGENBAUER_ORACLE = {(3, 30): 3343.5294117647058824, (1, 30): 26.133333333333333333,
                     (4, 12): 397.22222222222222222, (2, 5): 2.5714285714285714286}


def _pair(dot):
    return np.array([1.0, 0.0, 0.0]), np.array([dot, math.sqrt(1 - dot * dot), 0.0])


def test_sigma12_diagonal_and_antipodal():
    x, _ = _pair(0.0)
    assert sigma12(x, x) == pytest.approx(0.5)
    assert sigma12(x, -x) == pytest.approx(0.25)


@pytest.mark.parametrize("dot", sorted(H_INF_ORACLE))
def test_h_infinity_matches_integrated_oracle(dot):
    assert h_infinity(*_pair(dot)) == pytest.approx(H_INF_ORACLE[dot], rel=1e-6)


def test_h_infinity_on_diagonal():
    x, _ = _pair(0.0)
    assert h_infinity(x, x) == pytest.approx(1 / 8)
    assert h_infinity(x, x, "indicator") == pytest.approx(1 / 4)
    with pytest.raises(ConfigError):
        h_infinity(x, x, "tanh")


def test_gram_is_symmetric_psd():
    X = sphere_points(stream(0, "g"), 60, 4)
    K = InfiniteKernel().gram(X)
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K)[0] > -1e-12
    np.testing.assert_allclose(InfiniteKernel().gram(X[:3], X), K[:3])


def test_finite_width_kernel_concentrates():
    X = sphere_points(stream(1, "a"), 5, 5)
    X2 = sphere_points(stream(1, "b"), 5, 5)
    draws = np.array([finite_width_ntk(X, X2, 3000, 3000, seed=s) for s in range(12)])
    exact = np.array([h_infinity(a, b) for a, b in zip(X, X2)])
    se = draws.std(0, ddof=1) / math.sqrt(len(draws))
    assert np.max(np.abs(draws.mean(0) - exact) / se) < 4.5
    with pytest.raises(ConfigError):
        finite_width_ntk(X, X2[:3], 10, 10)


def test_ridge_solves_regularized_system():
    X = sphere_points(stream(2, "r"), 40, 3)
    y = X[:, 0]
    kern = InfiniteKernel()
    pred = kernel_ridge_fit(X, y, 1e-3, kern)
    K = kern.gram(X)
    np.testing.assert_allclose((K + 1e-3 * 40 * np.eye(40)) @ pred.dual_coeffs, y, atol=1e-10)
    np.testing.assert_allclose(pred.predict(X), K @ pred.dual_coeffs)
    assert pred.rkhs_norm() > 0
    with pytest.raises(ConfigError):
        kernel_ridge_fit(X, y, 0.0)


def test_ridge_reports_failed_factorization():
    with pytest.raises(NumericalError, match="smallest Gram eigenvalue"):
        kernel_ridge_fit(np.zeros((3, 2)), np.zeros(3), 1e-3, K=-np.eye(3))


@pytest.mark.parametrize("key", sorted(GEGENBAUER_ORACLE))
def test_gegenbauer_norm_matches_quadrature(key):
    assert gegenbauer_sq_norm(*key) == pytest.approx(GEGENBAUER_ORACLE[key], rel=1e-10)


def test_gegenbauer_target_has_unit_energy():
    f = gegenbauer_target(8, 3, seed=0)
    vals = f(sphere_points(stream(0, "e"), 200_000, 8)) ** 2
    assert abs(vals.mean() - 1.0) < 4 * vals.std() / math.sqrt(len(vals))
    with pytest.raises(ConfigError):
        gegenbauer_sq_norm(2, 2)


def test_lower_bound_run_table(tmp_path):
    best, rows = lower_bound_run(6, 1, 80, lambda_grid=(1e-3, 1e-1), n_test=200)
    assert len(rows) == 2 and best == min(r["ratio"] for r in rows)
    write_lambda_table(rows, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "lambda,train_mse,test_mse,ratio"
    assert len(DEFAULT_LAMBDA_GRID) == 12
    with pytest.raises(ConfigError):
        lower_bound_run(6, 1, 0)
