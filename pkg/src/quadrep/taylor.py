"""Second-order (quadratic) and first-order (linearized) Taylor models.

For inputs ``h`` in R^D, frozen first-layer weights ``W0`` (m x D), signs ``a``
and trainable ``W`` (m x D):

* quadratic:  f(h) = 1/(2 sqrt m) * sum_r a_r 1{w0_r.h >= 0} (w_r.h)^2
* linearized: f(h) = 1/sqrt m     * sum_r a_r relu(w0_r.h) (w_r.h)

Both are ``sum_r coef_r(h) * poly(w_r.h)`` with a coefficient matrix that does
not depend on ``W``; :class:`RegularizedRisk` caches it per dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._common import ConfigError, NumericalError, as_batch, check_finite, stream
from .losses import Loss

__all__ = [
    "TaylorModel",
    "init_taylor_model",
    "activation_coef",
    "forward",
    "empirical_risk",
    "risk_grad",
    "hessian_quadratic_form",
    "hessian_vector_product",
    "norm24",
    "Regularizer",
    "reg_value_and_grad",
    "RegularizedRisk",
]

KINDS = ("quadratic", "linearized")


@dataclass(frozen=True)
class TaylorModel:
    kind: str
    W0: np.ndarray
    a: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.W0.shape != self.W.shape or self.a.shape != (self.W0.shape[0],):
            raise ConfigError("W0, W must be m x D and a must have length m")

    @property
    def m(self) -> int:
        return self.W0.shape[0]

    @property
    def D(self) -> int:
        return self.W0.shape[1]

    def with_weights(self, W: np.ndarray) -> "TaylorModel":
        return replace(self, W=np.asarray(W, dtype=float))


def init_taylor_model(m: int, D: int, kind: str = "quadratic", seed: int = 0) -> TaylorModel:
    """Gaussian ``W0``, Rademacher ``a`` from the ``init`` stream, ``W = 0``."""
    if m < 1 or D < 1:
        raise ConfigError("m and D must be positive")
    rng = stream(seed, "init")
    W0 = rng.standard_normal((m, D))
    a = rng.choice(np.array([-1.0, 1.0]), size=m)
    return TaylorModel(kind, W0, a, np.zeros((m, D)))


def activation_coef(model: TaylorModel, H: np.ndarray) -> np.ndarray:
    """n x m matrix of ``a_r * 1{w0_r.h >= 0}`` or ``a_r * relu(w0_r.h)``."""
    P0 = H @ model.W0.T
    act = (P0 >= 0.0).astype(float) if model.kind == "quadratic" else np.maximum(P0, 0.0)
    return act * model.a


def _scale(model_kind: str, m: int) -> float:
    return 0.5 / np.sqrt(m) if model_kind == "quadratic" else 1.0 / np.sqrt(m)


def _forward_coef(kind: str, coef, P, m):
    poly = P * P if kind == "quadratic" else P
    return _scale(kind, m) * np.sum(coef * poly, axis=1)


def forward(model: TaylorModel, h: np.ndarray) -> np.ndarray:
    H, single = as_batch(h)
    out = _forward_coef(model.kind, activation_coef(model, H), H @ model.W.T, model.m)
    return out[0] if single else out


def _first_variation(kind, coef, P, Q, m):
    """d/dt f(W + tV) at t = 0, per sample."""
    if kind == "quadratic":
        return np.sum(coef * P * Q, axis=1) / np.sqrt(m)
    return np.sum(coef * Q, axis=1) / np.sqrt(m)


def _hessian_terms(kind, loss, coef, P, Q, y, m):
    """Curvature and Gauss-Newton parts of the risk's second variation.

    The first is ``mean(l' * d2f)`` with ``d2f = 2 f_V`` (zero for the
    linearized model); the second is ``mean(l'' * df^2)``.
    """
    f = _forward_coef(kind, coef, P, m)
    df = _first_variation(kind, coef, P, Q, m)
    curv = 0.0
    if kind == "quadratic":
        curv = 2.0 * np.mean(loss.d1(f, y) * _forward_coef(kind, coef, Q, m))
    gn = np.mean(loss.d2(f, y) * df * df)
    return float(curv), float(gn)


def empirical_risk(model: TaylorModel, loss: Loss, H: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(loss.value(forward(model, H), y)))


def _grad_coef(kind, loss, coef, P, y, m):
    f = _forward_coef(kind, coef, P, m)
    lp = loss.d1(f, y)
    inner = coef * P if kind == "quadratic" else coef
    return lp[:, None] * inner / (len(y) * np.sqrt(m))


def risk_grad(model: TaylorModel, loss: Loss, H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the empirical risk with respect to ``W`` (m x D)."""
    coef = activation_coef(model, H)
    P = H @ model.W.T
    return _grad_coef(model.kind, loss, coef, P, y, model.m).T @ H


def hessian_quadratic_form(model: TaylorModel, loss: Loss, H, y, V) -> float:
    """``vec(V)^T Hess vec(V)`` of the empirical risk at ``model.W``."""
    coef = activation_coef(model, H)
    curv, gn = _hessian_terms(model.kind, loss, coef, H @ model.W.T, H @ np.asarray(V).T, y, model.m)
    return curv + gn


def _hvp_coef(kind, loss, coef, P, Q, y, m):
    f = _forward_coef(kind, coef, P, m)
    df = _first_variation(kind, coef, P, Q, m)
    w = (loss.d2(f, y) * df)[:, None]
    if kind == "quadratic":
        mat = w * coef * P + loss.d1(f, y)[:, None] * coef * Q
    else:
        mat = w * coef
    return mat / (len(y) * np.sqrt(m))


def hessian_vector_product(model: TaylorModel, loss: Loss, H, y, V) -> np.ndarray:
    coef = activation_coef(model, H)
    Q = H @ np.asarray(V).T
    return _hvp_coef(model.kind, loss, coef, H @ model.W.T, Q, y, model.m).T @ H


def norm24(W: np.ndarray) -> float:
    """``(sum_r |w_r|_2^4)^{1/4}``."""
    sq = np.sum(np.asarray(W) ** 2, axis=1)
    return float(np.sum(sq * sq) ** 0.25)


@dataclass(frozen=True)
class Regularizer:
    """``lam * |W|_{2,4}^4``, its data-dependent variant, or ``lam * |W|_F^2``.

    The data-dependent variant measures rows after multiplying by
    ``sigma_half`` (a symmetric square root of the feature covariance), i.e.
    ``lam * sum_r (w_r^T Sigma w_r)^2``.
    """

    kind: str = "norm24"
    lam: float = 0.0
    sigma_half: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("norm24", "data_dependent", "frobenius"):
            raise ConfigError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0 or not np.isfinite(self.lam):
            raise ConfigError("regularization strength must be finite and >= 0")
        if self.kind == "data_dependent":
            if self.sigma_half is None:
                raise ConfigError("data_dependent regularizer needs sigma_half")
            object.__setattr__(self, "_sigma", self.sigma_half @ self.sigma_half)

    def _metric(self, W):
        return W @ self._sigma if self.kind == "data_dependent" else W

    def value(self, W) -> float:
        if self.kind == "frobenius":
            return self.lam * float(np.sum(W * W))
        sq = np.sum(W * self._metric(W), axis=1)
        return self.lam * float(np.sum(sq * sq))

    def grad(self, W) -> np.ndarray:
        if self.kind == "frobenius":
            return 2.0 * self.lam * W
        MW = self._metric(W)
        return 4.0 * self.lam * np.sum(W * MW, axis=1)[:, None] * MW

    def hess_form(self, W, V) -> float:
        if self.kind == "frobenius":
            return 2.0 * self.lam * float(np.sum(V * V))
        MW, MV = self._metric(W), self._metric(V)
        ww = np.sum(W * MW, axis=1)
        vv = np.sum(V * MV, axis=1)
        wv = np.sum(W * MV, axis=1)
        return self.lam * float(np.sum(4.0 * ww * vv + 8.0 * wv * wv))

    def hvp(self, W, V) -> np.ndarray:
        if self.kind == "frobenius":
            return 2.0 * self.lam * V
        MW, MV = self._metric(W), self._metric(V)
        ww = np.sum(W * MW, axis=1)[:, None]
        wv = np.sum(W * MV, axis=1)[:, None]
        return self.lam * (4.0 * ww * MV + 8.0 * wv * MW)


def reg_value_and_grad(reg: Regularizer, W) -> tuple[float, np.ndarray]:
    W = np.asarray(W, dtype=float)
    return reg.value(W), reg.grad(W)


class RegularizedRisk:
    """Objective ``W -> R(W) + reg(W)`` on a fixed batch, with cached activations."""

    def __init__(self, model: TaylorModel, loss: Loss, H, y, reg: Regularizer | None = None):
        self.model = model
        self.loss = loss
        self.H = np.ascontiguousarray(H, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.H.shape != (len(self.y), model.D):
            raise ConfigError(f"H must be n x D = {len(self.y)} x {model.D}, got {self.H.shape}")
        self.reg = reg if reg is not None else Regularizer("norm24", 0.0)
        self.coef = activation_coef(model, self.H)
        self.shape = model.W.shape
        self._cache = (None, None)

    def _P(self, W):
        # optimizers evaluate value then grad on the same array object
        if W is self._cache[0]:
            return self._cache[1]
        P = self.H @ W.T
        self._cache = (W, P)
        return P

    def predict(self, W):
        return _forward_coef(self.model.kind, self.coef, self._P(W), self.model.m)

    def plain_value(self, W) -> float:
        return float(np.mean(self.loss.value(self.predict(W), self.y)))

    def value(self, W) -> float:
        val = self.plain_value(W) + self.reg.value(W)
        if not np.isfinite(val):
            raise NumericalError("objective evaluated to a non-finite value")
        return val

    def grad(self, W) -> np.ndarray:
        G = _grad_coef(self.model.kind, self.loss, self.coef, self._P(W), self.y, self.model.m).T @ self.H
        G = G + self.reg.grad(W)
        check_finite("gradient", G)
        return G

    def hess_terms(self, W, V) -> tuple[float, float]:
        return _hessian_terms(self.model.kind, self.loss, self.coef, self._P(W), self._P(V), self.y, self.model.m)

    def hess_form(self, W, V) -> float:
        curv, gn = self.hess_terms(W, V)
        return curv + gn + self.reg.hess_form(W, V)

    def hvp(self, W, V) -> np.ndarray:
        M = _hvp_coef(self.model.kind, self.loss, self.coef, self._P(W), self._P(V), self.y, self.model.m)
        return M.T @ self.H + self.reg.hvp(W, V)

    def norm24(self, W) -> float:
        return norm24(W)
