"""Self-check battery: closed forms and derivatives against independent numerics.

Each check yields a :class:`CheckResult` (measured value, bound, basis).
``fast`` finishes in well under a minute; ``full`` uses larger samples and
adds the finite-width kernel comparison.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_genlaguerre
from scipy.stats import norm

from ._common import stream
from .express import concentration_bound, indicator_concentration_stat, opposite_sign_probability
from .features import (evaluate_features, hermite_coeff_indicator, hermite_poly, monomial_feature_count,
                       sample_feature_layer, sphere_points)
from .landscape import OptimConfig, find_sosp, lambda_rule, min_hess_eig_estimate
from .losses import get_loss
from .ntk_kernel import finite_width_ntk, h_infinity, sigma12
from .taylor import (Regularizer, RegularizedRisk, TaylorModel, empirical_risk, hessian_quadratic_form,
                     init_taylor_model, risk_grad)
from .whiten import estimate_covariance, hadamard_power_min_eig, population_covariance, relative_concentration

__all__ = ["CheckResult", "run_verify", "format_report", "constructed_saddle", "hermite_quadrature_oracle",
           "gradient_fd_error", "hessian_fd_error"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    bound: str
    basis: str
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name} | {self.measured:.6g} | {self.bound} | {self.basis} | {status}"


def format_report(results) -> str:
    lines = ["check | measured | bound | basis | status"]
    lines += [r.line() for r in results]
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)


# independent oracles ------------------------------------------------------


def hermite_quadrature_oracle(k: int, nodes: int = 80) -> float:
    """``E[1{z >= 0} He_k(z)] / sqrt(k!)`` by half-line Gauss-Laguerre quadrature.

    Substituting ``t = z^2 / 2`` gives a weight ``t^{-1/2} e^{-t}`` for even
    ``k``; for odd ``k`` the integrand ``He_k(z) / z`` is a polynomial in ``z^2``,
    so the weight becomes ``e^{-t}``.
    """
    if k % 2 == 0:
        t, w = roots_genlaguerre(nodes, -0.5)
        z = np.sqrt(2 * t)
        val = np.sum(w * hermite_poly(k, z)) / (math.sqrt(2) * math.sqrt(2 * math.pi))
    else:
        t, w = roots_genlaguerre(nodes, 0.0)
        z = np.sqrt(2 * t)
        val = np.sum(w * hermite_poly(k, z) / z) / math.sqrt(2 * math.pi)
    return float(val / math.sqrt(math.factorial(k)))


def _random_instance(rng, kind, loss_name):
    m, D, n = int(rng.integers(3, 9)), int(rng.integers(2, 7)), int(rng.integers(10, 40))
    model = init_taylor_model(m, D, kind, int(rng.integers(0, 2**31)))
    model = model.with_weights(rng.standard_normal((m, D)) * 0.5)
    H = rng.standard_normal((n, D))
    if loss_name == "logistic":
        y = rng.choice([-1.0, 1.0], size=n)
    else:
        y = rng.uniform(-1.3, 1.3, size=n)
    return model, get_loss(loss_name), H, y


def gradient_fd_error(model, loss, H, y, rng, coords: int = 10, step: float = 1e-5) -> float:
    """Max relative error of ``risk_grad`` against central differences on random coordinates."""
    G = risk_grad(model, loss, H, y)
    worst = 0.0
    scale = max(np.max(np.abs(G)), 1e-12)
    for _ in range(coords):
        i, j = int(rng.integers(model.m)), int(rng.integers(model.D))
        E = np.zeros_like(model.W)
        E[i, j] = step
        fd = (empirical_risk(model.with_weights(model.W + E), loss, H, y)
              - empirical_risk(model.with_weights(model.W - E), loss, H, y)) / (2 * step)
        worst = max(worst, abs(fd - G[i, j]) / max(abs(G[i, j]), 1e-3 * scale))
    return worst


def hessian_fd_error(model, loss, H, y, V, step: float = 1e-2) -> float:
    """Relative error of ``hessian_quadratic_form`` against Richardson-extrapolated second differences."""

    def second_diff(t):
        f0 = empirical_risk(model, loss, H, y)
        fp = empirical_risk(model.with_weights(model.W + t * V), loss, H, y)
        fm = empirical_risk(model.with_weights(model.W - t * V), loss, H, y)
        return (fp - 2 * f0 + fm) / (t * t)

    fd = (4 * second_diff(step / 2) - second_diff(step)) / 3
    exact = hessian_quadratic_form(model, loss, H, y, V)
    return abs(fd - exact) / max(abs(exact), 1e-8)


def constructed_saddle(seed: int = 0, lam: float = 1e-3):
    """A regularized risk with a strict saddle at ``W = 0``.

    Four neurons (two of each output sign) share the gate direction ``e_1``
    and every input has first coordinate near 3 with label +1.3, so the
    positive neurons carry curvature of about ``-tanh(1.3) * 9 / 2`` at the
    origin while the gradient there vanishes.
    """
    rng = stream(seed, "saddle")
    m, D, n = 4, 3, 16
    W0 = np.zeros((m, D))
    W0[:, 0] = 1.0
    model = TaylorModel("quadratic", W0, np.array([1.0, 1.0, -1.0, -1.0]), np.zeros((m, D)))
    H = np.column_stack([3.0 + 0.1 * rng.standard_normal(n), 0.3 * rng.standard_normal((n, D - 1))])
    y = np.full(n, 1.3)
    return RegularizedRisk(model, get_loss("logcosh"), H, y, Regularizer("norm24", lam)), model.W


# checks ---------------------------------------------------------------------

FAMILY_ALPHA = 1e-3


def _z_bound(count: int) -> float:
    """Two-sided Bonferroni cut for ``count`` z-scores at family-wise level ``FAMILY_ALPHA``."""
    return float(norm.isf(FAMILY_ALPHA / (2 * count)))



def _check_gradient(seed, count):
    rng = stream(seed, "verify", "grad")
    worst = 0.0
    for i in range(count):
        kind = ("quadratic", "linearized")[i % 2]
        worst = max(worst, gradient_fd_error(*_random_instance(rng, kind, ("logcosh", "logistic")[(i // 2) % 2]), rng))
    return CheckResult("gradient_vs_central_differences", worst, "<= 1e-5", "finite differences", worst <= 1e-5)


def _check_hessian(seed, count):
    rng = stream(seed, "verify", "hess")
    worst = 0.0
    for i in range(count):
        model, loss, H, y = _random_instance(rng, ("quadratic", "linearized")[i % 2], ("logcosh", "logistic")[(i // 2) % 2])
        V = rng.standard_normal(model.W.shape)
        worst = max(worst, hessian_fd_error(model, loss, H, y, V / np.linalg.norm(V)))
    return CheckResult("hessian_form_vs_second_differences", worst, "<= 1e-4", "finite differences", worst <= 1e-4)


def _check_hvp(seed):
    rng = stream(seed, "verify", "hvp")
    model, loss, H, y = _random_instance(rng, "quadratic", "logcosh")
    obj = RegularizedRisk(model, loss, H, y, Regularizer("norm24", 0.1))
    V = rng.standard_normal(model.W.shape)
    a, b = float(np.sum(V * obj.hvp(model.W, V))), obj.hess_form(model.W, V)
    err = abs(a - b) / max(abs(b), 1e-12)
    return CheckResult("hvp_matches_quadratic_form", err, "<= 1e-10", "algebraic identity", err <= 1e-10)


def _check_hermite():
    worst = max(abs(hermite_coeff_indicator(k) - hermite_quadrature_oracle(k)) for k in range(16))
    return CheckResult("hermite_indicator_coefficients", worst, "<= 1e-10", "Gauss-Laguerre quadrature", worst <= 1e-10)


def _check_hermite_even():
    worst = max(abs(hermite_coeff_indicator(k)) for k in range(2, 41, 2))
    return CheckResult("hermite_even_coefficients_vanish", worst, "== 0", "parity", worst == 0.0)


def _check_parseval():
    total = sum(hermite_coeff_indicator(k) ** 2 for k in range(42))
    ok = 0.48 <= total <= 0.5
    return CheckResult("hermite_partial_energy_k41", total, "in [0.48, 0.5]", "E[1{z>=0}^2] = 1/2", ok)


def _check_population_cov(seed, n_mc):
    layer = sample_feature_layer(6, 5, use_bias=False, seed=seed)
    X = sphere_points(stream(seed, "verify", "cov"), n_mc, 6)
    G = evaluate_features(layer, X)
    S = population_covariance(layer)
    prods = G[:, :, None] * G[:, None, :]
    mean, se = prods.mean(axis=0), prods.std(axis=0) / math.sqrt(n_mc)
    iu = tuple(idx[:5] for idx in np.triu_indices(5, 1))
    z = float(np.max(np.abs(mean[iu] - S[iu]) / se[iu]))
    cut = _z_bound(5)
    return CheckResult("population_covariance_vs_monte_carlo", z, f"<= {cut:.3g} (max z, 5 pairs)", "Monte Carlo", z <= cut)


def _check_concentration_rate(seed, n0):
    d, D = 8, 20
    layer = sample_feature_layer(d, D, use_bias=False, seed=seed)
    S = population_covariance(layer)
    errs = []
    for size in (n0, 4 * n0):
        vals = []
        for rep in range(5):
            X = sphere_points(stream(seed, "verify", "rate", size, rep), size, d)
            vals.append(relative_concentration(estimate_covariance(layer, X), S))
        errs.append(float(np.median(vals)))
    ratio = errs[0] / errs[1]
    return CheckResult("relative_concentration_rate_4x", ratio, "in [1.4, 3.0]", "1/sqrt(n0) rate", 1.4 <= ratio <= 3.0)


def _check_hadamard(seed):
    layer = sample_feature_layer(80, 80, use_bias=False, seed=seed)
    val = hadamard_power_min_eig(layer, 1)
    return CheckResult("hadamard_square_min_eig_d80", val, ">= 0.5", "random Gram", val >= 0.5)


def _check_claim_concentration(seed, m0, D):
    W0 = stream(seed, "verify", "claim").standard_normal((m0, D))
    probes = stream(seed, "verify", "claim-probe").standard_normal((20, D))
    stat = indicator_concentration_stat(W0, probes)
    bound = concentration_bound(D, m0, 0.05)
    return CheckResult("indicator_fraction_concentration", stat, f"<= {bound:.4g}", "union bound, delta=0.05", stat <= bound)


def _check_opposite_sign():
    rho = np.array([0.9, 0.99, 0.999])
    gap = float(np.max(opposite_sign_probability(rho) - np.sqrt(1 - rho**2)))
    return CheckResult("opposite_sign_probability_bound", gap, "<= 0", "arccos(rho)/pi <= sqrt(1-rho^2)", gap <= 0.0)


def _check_sigma12(seed, D):
    X = sphere_points(stream(seed, "verify", "s12"), 10, 7)
    X2 = sphere_points(stream(seed, "verify", "s12b"), 10, 7)
    layer = sample_feature_layer(7, D, use_bias=True, seed=seed)
    G1, G2 = evaluate_features(layer, X), evaluate_features(layer, X2)
    P = G1 * G2
    z = float(np.max(np.abs(P.mean(axis=1) - sigma12(X, X2).diagonal()) / (P.std(axis=1) / math.sqrt(D))))
    cut = _z_bound(10)
    return CheckResult("feature_inner_product_vs_orthant_formula", z, f"<= {cut:.3g} (max z, 10 pairs)", "Monte Carlo",
                       z <= cut)


def _check_kernel(seed, width, reps, pairs):
    X = sphere_points(stream(seed, "verify", "ntk"), pairs, 5)
    X2 = sphere_points(stream(seed, "verify", "ntk2"), pairs, 5)
    draws = np.array([finite_width_ntk(X, X2, width, width, seed=seed * 1000 + r) for r in range(reps)])
    exact = np.array([h_infinity(a, b) for a, b in zip(X, X2)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(reps)
    z = float(np.max(np.abs(draws.mean(axis=0) - exact) / se))
    cut = _z_bound(pairs)
    return CheckResult("h_infinity_vs_finite_width", z, f"<= {cut:.3g} (max z, {pairs} pairs)", "replicated Monte Carlo",
                       z <= cut)


def _check_saddle(seed):
    obj, W = constructed_saddle(seed)
    start = min_hess_eig_estimate(obj, W, seed=seed)
    _, cert = find_sosp(obj, W, OptimConfig(max_iters=500, seed=seed))
    ok = start <= -0.1 and cert.min_hess_eig_est >= -1e-2
    return CheckResult("saddle_escape_min_eig", cert.min_hess_eig_est, f">= -1e-2 (start {start:.3g})",
                       "constructed saddle", ok)


def _check_calculators():
    lam = lambda_rule(0.0, 0.0, 0.36, 1.0)
    count = monomial_feature_count(2, 1.0, 0.1, 0.1)
    err = max(abs(lam - 0.01) / 0.01, abs(count - 2.56e9) / 2.56e9)
    return CheckResult("reference_calculators", err, "<= 1e-12", "hand substitution", err <= 1e-12)


def run_verify(level: str = "fast", seed: int = 0) -> list[CheckResult]:
    """Run the battery; ``level`` is ``fast`` or ``full``."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    full = level == "full"
    checks = [
        lambda: _check_gradient(seed, 20 if full else 6),
        lambda: _check_hessian(seed, 20 if full else 6),
        lambda: _check_hvp(seed),
        _check_hermite,
        _check_hermite_even,
        _check_parseval,
        lambda: _check_population_cov(seed, 200_000 if full else 40_000),
        lambda: _check_concentration_rate(seed, 4000 if full else 1000),
        lambda: _check_hadamard(seed),
        lambda: _check_claim_concentration(seed, 4000 if full else 1000, 30),
        _check_opposite_sign,
        lambda: _check_sigma12(seed, 200_000 if full else 40_000),
        lambda: _check_saddle(seed),
        _check_calculators,
    ]
    if full:
        checks.append(lambda: _check_kernel(seed, 4000, 30, 20))
    results = []
    for fn in checks:
        t0 = time.perf_counter()
        res = fn()
        results.append(CheckResult(res.name, res.measured, res.bound, res.basis, res.passed,
                                   time.perf_counter() - t0))
    return results
