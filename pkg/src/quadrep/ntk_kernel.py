"""Infinite-width tangent kernel of the two-layer model on indicator features.

With biased indicator features and x on the sphere, the feature inner product
converges to

    Sigma12(x, x') = 1/4 + arcsin((x.x' + 1) / 2) / (2 pi),     Sigma11 = 1/2,

and the infinite-width kernel is ``E[phi'(u) phi'(v)] * Sigma12`` for
``(u, v) ~ N(0, Sigma)``.  Kernel ridge regression with this kernel is the
baseline whose error is lower bounded on pure high-degree targets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import eval_gegenbauer, gammaln

from ._common import ConfigError, NumericalError, as_batch, stream
from .features import evaluate_features, sample_feature_layer, sphere_points

__all__ = [
    "sigma12",
    "h_infinity",
    "InfiniteKernel",
    "KernelPredictor",
    "kernel_ridge_fit",
    "finite_width_ntk",
    "gegenbauer_sq_norm",
    "gegenbauer_target",
    "DEFAULT_LAMBDA_GRID",
    "lower_bound_run",
    "write_lambda_table",
]

DEFAULT_LAMBDA_GRID = tuple(np.logspace(-6, 2, 12))
SIGMA_DIAG = 0.5


def sigma12(x, x2) -> np.ndarray:
    """Orthant probability of two biased indicator features; broadcasts over batches."""
    X, s1 = as_batch(x)
    X2, s2 = as_batch(x2)
    rho = np.clip((X @ X2.T + 1.0) / 2.0, -1.0, 1.0)
    out = 0.25 + np.arcsin(rho) / (2 * np.pi)
    if s1 and s2:
        return out[0, 0]
    return out[0] if s1 else (out[:, 0] if s2 else out)


def _outer_factor(s12, phi_prime):
    rho_g = np.clip(s12 / SIGMA_DIAG, -1.0, 1.0)
    if phi_prime == "indicator":
        return 0.25 + np.arcsin(rho_g) / (2 * np.pi)
    if phi_prime == "relu":
        theta = np.arccos(rho_g)
        return SIGMA_DIAG * (np.sin(theta) + (np.pi - theta) * np.cos(theta)) / (2 * np.pi)
    raise ConfigError(f"phi_prime must be 'relu' or 'indicator', got {phi_prime!r}")


def h_infinity(x, x2, phi_prime: str = "relu"):
    """``E[phi'(u) phi'(v)] * Sigma12`` for relu (default) or indicator ``phi'``."""
    s12 = sigma12(x, x2)
    return _outer_factor(s12, phi_prime) * s12


@dataclass(frozen=True)
class InfiniteKernel:
    phi_prime: str = "relu"

    def __post_init__(self):
        if self.phi_prime not in ("relu", "indicator"):
            raise ConfigError(f"phi_prime must be 'relu' or 'indicator', got {self.phi_prime!r}")

    def gram(self, X, X2=None) -> np.ndarray:
        X = np.atleast_2d(X)
        X2 = X if X2 is None else np.atleast_2d(X2)
        K = h_infinity(X, X2, self.phi_prime)
        if X2 is X:
            K = 0.5 * (K + K.T)
        return K


@dataclass(frozen=True)
class KernelPredictor:
    support_X: np.ndarray
    dual_coeffs: np.ndarray
    ridge_lambda: float
    kernel: InfiniteKernel

    def predict(self, X) -> np.ndarray:
        return self.kernel.gram(X, self.support_X) @ self.dual_coeffs

    def rkhs_norm(self, K=None) -> float:
        K = self.kernel.gram(self.support_X) if K is None else K
        return float(math.sqrt(max(self.dual_coeffs @ K @ self.dual_coeffs, 0.0)))


def kernel_ridge_fit(X, y, ridge_lambda: float, kernel: InfiniteKernel | None = None, K=None) -> KernelPredictor:
    """Solve ``(K + lambda n I) alpha = y`` by Cholesky.

    A precomputed Gram ``K`` may be passed to share it across a lambda grid.
    """
    if ridge_lambda <= 0:
        raise ConfigError("ridge lambda must be positive")
    kernel = kernel or InfiniteKernel()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = len(y)
    K = kernel.gram(X) if K is None else K
    A = K + ridge_lambda * n * np.eye(n)
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        lam_min = float(np.linalg.eigvalsh(K)[0])
        raise NumericalError(f"Cholesky failed; smallest Gram eigenvalue is {lam_min:.3g}") from exc
    alpha = linalg.cho_solve(factor, y)
    return KernelPredictor(X, alpha, float(ridge_lambda), kernel)


def finite_width_ntk(X, X2, D: int, m: int, seed: int = 0, phi_prime: str = "relu") -> np.ndarray:
    """Pairwise finite-width kernel for the rows of ``X`` and ``X2``.

    With ``g`` the indicator features and ``u_r = w0_r . g / sqrt(D)``, returns
    ``(1/m) sum_r phi'(u_r(x)) phi'(u_r(x')) * (g(x) . g(x') / D)`` per pair.
    """
    X, X2 = np.atleast_2d(X), np.atleast_2d(X2)
    if X.shape != X2.shape:
        raise ConfigError("pair batches must have equal shapes")
    layer = sample_feature_layer(X.shape[1], D, use_bias=True, seed=seed)
    W0 = stream(seed, "init").standard_normal((m, D))
    G1, G2 = evaluate_features(layer, X), evaluate_features(layer, X2)
    U1, U2 = G1 @ W0.T / math.sqrt(D), G2 @ W0.T / math.sqrt(D)
    if phi_prime == "relu":
        A1, A2 = np.maximum(U1, 0.0), np.maximum(U2, 0.0)
    elif phi_prime == "indicator":
        A1, A2 = (U1 >= 0).astype(float), (U2 >= 0).astype(float)
    else:
        raise ConfigError(f"phi_prime must be 'relu' or 'indicator', got {phi_prime!r}")
    return np.mean(A1 * A2, axis=1) * np.sum(G1 * G2, axis=1) / D


def gegenbauer_sq_norm(p: int, d: int) -> float:
    """``E[C_p^{(d-2)/2}(u.x)^2]`` for x uniform on S^{d-1}."""
    if d < 3:
        raise ConfigError("Gegenbauer targets need d >= 3")
    a = (d - 2) / 2.0
    log_h = math.log(math.pi) + (1 - 2 * a) * math.log(2) + gammaln(p + 2 * a) - gammaln(p + 1) - math.log(p + a) - 2 * gammaln(a)
    log_z = 0.5 * math.log(math.pi) + gammaln(a + 0.5) - gammaln(a + 1)
    return math.exp(log_h - log_z)


def gegenbauer_target(d: int, p: int, seed: int = 0):
    """Unit-L2 pure degree-p spherical harmonic ``x -> C_p((u.x)) / norm`` with random ``u``."""
    u = sphere_points(stream(seed, "target"), 1, d)[0]
    scale = 1.0 / math.sqrt(gegenbauer_sq_norm(p, d))
    a = (d - 2) / 2.0

    def f(x):
        return scale * eval_gegenbauer(p, a, np.clip(np.asarray(x) @ u, -1.0, 1.0))

    return f


def lower_bound_run(d: int, p: int, n: int, lambda_grid=DEFAULT_LAMBDA_GRID, seed: int = 0,
                    n_test: int = 2000, phi_prime: str = "relu"):
    """Kernel ridge on a pure degree-p target over a ridge grid.

    Returns ``(best_ratio, rows)``; each row holds ``lambda, train_mse,
    test_mse, ratio`` where ratio is test MSE over the test-set mean of f*^2.
    """
    if n < 1 or n_test < 1 or not len(lambda_grid):
        raise ConfigError("need n >= 1, n_test >= 1 and a nonempty lambda grid")
    target = gegenbauer_target(d, p, seed)
    X = sphere_points(stream(seed, "data", "train"), n, d)
    Xt = sphere_points(stream(seed, "data", "test"), n_test, d)
    y, yt = target(X), target(Xt)
    kernel = InfiniteKernel(phi_prime)
    K, Kt = kernel.gram(X), kernel.gram(Xt, X)
    energy = float(np.mean(yt * yt))
    rows = []
    for lam in lambda_grid:
        pred = kernel_ridge_fit(X, y, float(lam), kernel, K=K)
        tr = float(np.mean((K @ pred.dual_coeffs - y) ** 2))
        te = float(np.mean((Kt @ pred.dual_coeffs - yt) ** 2))
        rows.append(dict(**{"lambda": float(lam)}, train_mse=tr, test_mse=te, ratio=te / energy))
    return min(r["ratio"] for r in rows), rows


def write_lambda_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "train_mse", "test_mse", "ratio"])
        for r in rows:
            w.writerow([f"{r[k]:.17g}" for k in ("lambda", "train_mse", "test_mse", "ratio")])
