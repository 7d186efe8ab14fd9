"""Random indicator features and their polynomial readouts.

A layer maps ``x`` in R^d to ``g(x) = 1{V x + b >= 0}`` in {0, 1}^D with the
rows of ``V`` and the entries of ``b`` drawn i.i.d. standard normal.  Ties
(``V x + b == 0``) evaluate to 1.

Fixed linear readouts of ``g`` approximate monomials ``(beta . x)^k`` on the
unit sphere.  The readout weight of neuron ``i`` is

    c_k * He_k(v_i . beta / |beta|) * gate_k(b_i) / D,

where ``He_k`` is the probabilists' Hermite polynomial and ``gate_k`` keeps
neurons whose bias lies in a narrow window near zero.  The constant ``c_k`` is
calibrated so that the readout is unbiased over the draw of the layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from ._common import ConfigError, as_batch, double_factorial, stream

__all__ = [
    "FeatureLayer",
    "StackedPoly",
    "sample_feature_layer",
    "evaluate_features",
    "hermite_poly",
    "hermite_coeff_indicator",
    "monomial_gate",
    "monomial_calibration",
    "monomial_scale",
    "monomial_coeffs",
    "stacked_poly_coeffs",
    "readout_l2_error",
    "monomial_feature_count",
    "sphere_points",
    "scale_bound",
]


@dataclass(frozen=True)
class FeatureLayer:
    V: np.ndarray
    b: np.ndarray | None
    seed: int
    use_bias: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "use_bias", self.b is not None)
        if self.V.ndim != 2:
            raise ConfigError("V must be a D x d matrix")
        if self.b is not None and self.b.shape != (self.V.shape[0],):
            raise ConfigError("b must have one entry per row of V")

    @property
    def D(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    def subset(self, rows) -> "FeatureLayer":
        """Layer made of the selected neurons (same seed tag)."""
        b = None if self.b is None else self.b[rows]
        return FeatureLayer(self.V[rows], b, self.seed)


def sphere_points(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """``n`` points uniform on S^{d-1}, by normalizing Gaussian draws."""
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_feature_layer(d: int, D: int, use_bias: bool = True, seed: int = 0) -> FeatureLayer:
    if d < 1 or D < 1:
        raise ConfigError(f"need d >= 1 and D >= 1, got d={d}, D={D}")
    rng = stream(seed, "layer")
    V = rng.standard_normal((D, d))
    b = rng.standard_normal(D) if use_bias else None
    return FeatureLayer(V, b, int(seed))


def evaluate_features(layer: FeatureLayer, x: np.ndarray) -> np.ndarray:
    """Indicator features as float64 (0.0 / 1.0); shape (D,) or (n, D)."""
    X, single = as_batch(x)
    if X.shape[1] != layer.d:
        raise ConfigError(f"input dimension {X.shape[1]} does not match layer d={layer.d}")
    pre = X @ layer.V.T
    if layer.b is not None:
        pre += layer.b
    g = (pre >= 0.0).astype(float)
    return g[0] if single else g


def hermite_poly(k: int, z) -> np.ndarray:
    """Probabilists' Hermite polynomial ``He_k`` by three-term recurrence."""
    if k < 0:
        raise ConfigError("Hermite degree must be non-negative")
    z = np.asarray(z, dtype=float)
    prev, cur = np.ones_like(z), z.copy()
    if k == 0:
        return prev
    for j in range(1, k):
        prev, cur = cur, z * cur - j * prev
    return cur


def hermite_coeff_indicator(k: int) -> float:
    """Coefficient of ``1{z >= 0}`` on the normalized polynomial He_k / sqrt(k!).

    Computed in log space so large ``k`` does not overflow.
    """
    if k < 0:
        raise ConfigError("Hermite degree must be non-negative")
    if k == 0:
        return 0.5
    if k % 2 == 0:
        return 0.0
    i = (k - 1) // 2
    log_mag = (
        -0.5 * (math.log(2 * math.pi) + gammaln(k + 1))
        + gammaln(2 * i + 1)
        - i * math.log(2.0)
        - gammaln(i + 1)
    )
    return (-1.0) ** i * math.exp(log_mag)


def monomial_gate(k: int, b) -> np.ndarray:
    """Bias window: ``0 < -b < 1/(2k)`` for even k, ``|b| < 1/(2k)`` for odd k."""
    b = np.asarray(b, dtype=float)
    if k < 1:
        return np.ones_like(b, dtype=bool)
    width = 1.0 / (2 * k)
    if k % 2 == 0:
        return (-b > 0.0) & (-b < width)
    return np.abs(b) < width


@lru_cache(maxsize=None)
def monomial_calibration(k: int) -> float:
    """``q_k`` with ``E[He_k(v.u) gate_k(b) 1{v.x + b >= 0}] = q_k (u.x)^k``.

    Conditioning on ``t = v.x`` turns the Hermite factor into ``rho^k He_k(t)``
    and ``E[He_k(t) 1{t >= s}] = He_{k-1}(s) phi(s)``, leaving a 1-D integral
    over the bias window that quadrature resolves to machine precision.
    """
    if k < 1:
        raise ConfigError("calibration is defined for k >= 1")
    width = 1.0 / (2 * k)
    lo, hi = (-width, 0.0) if k % 2 == 0 else (-width, width)

    def integrand(b):
        phi = math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi)
        return float(hermite_poly(k - 1, -b)) * phi * phi

    val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def monomial_scale(k: int, beta_norm: float = 1.0) -> float:
    """Readout constant ``c_k`` for a monomial of slope norm ``beta_norm``."""
    if k == 0:
        return 2.0
    return beta_norm**k / monomial_calibration(k)


def monomial_coeffs(layer: FeatureLayer, beta, k: int) -> np.ndarray:
    """Per-neuron readout (length D, already divided by D) for ``(beta . x)^k``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (layer.d,):
        raise ConfigError(f"beta must have length d={layer.d}")
    if k < 0:
        raise ConfigError("monomial degree must be non-negative")
    if k == 0:
        return np.full(layer.D, 2.0 / layer.D)
    if not layer.use_bias:
        raise ConfigError("monomials of degree >= 1 need a layer with biases")
    norm = float(np.linalg.norm(beta))
    if norm == 0.0:
        return np.zeros(layer.D)
    proj = layer.V @ (beta / norm)
    c = monomial_scale(k, norm)
    return c * hermite_poly(k, proj) * monomial_gate(k, layer.b) / layer.D


@dataclass(frozen=True)
class StackedPoly:
    """Concatenated per-term layers with a block-diagonal readout.

    ``coeffs[lo:hi] . g[lo:hi]`` approximates term ``s`` for ``(lo, hi) = blocks[s]``;
    the full dot product ``coeffs . g`` approximates the sum of all terms.
    """

    layer: FeatureLayer
    coeffs: np.ndarray
    blocks: tuple[tuple[int, int], ...]
    specs: tuple[tuple[tuple[float, ...], int], ...] = ()

    def term_readout(self, s: int) -> np.ndarray:
        """Length-D readout of term ``s`` alone (zero outside its block)."""
        lo, hi = self.blocks[s]
        out = np.zeros_like(self.coeffs)
        out[lo:hi] = self.coeffs[lo:hi]
        return out


def stacked_poly_coeffs(specs, layer_budget, seed: int = 0) -> StackedPoly:
    """One fresh biased layer of width ``layer_budget[s]`` per ``(beta_s, k_s)``, stacked.

    Block ``s`` draws its neurons from the ``("layer", s)`` sub-stream of ``seed``.
    """
    specs = [(np.asarray(beta, dtype=float), int(k)) for beta, k in specs]
    budgets = [int(D) for D in np.broadcast_to(np.asarray(layer_budget), (len(specs),))]
    if not specs:
        raise ConfigError("need at least one (beta, k) term")
    if any(D < 1 for D in budgets):
        raise ConfigError("every per-term width must be positive")
    d = specs[0][0].shape[0]
    if any(beta.shape != (d,) for beta, _ in specs):
        raise ConfigError("all beta vectors must share one dimension")
    Vs, bs, cs, blocks, lo = [], [], [], [], 0
    for s, ((beta, k), D) in enumerate(zip(specs, budgets)):
        rng = stream(seed, "layer", s)
        sub = FeatureLayer(rng.standard_normal((D, d)), rng.standard_normal(D), int(seed))
        Vs.append(sub.V)
        bs.append(sub.b)
        cs.append(monomial_coeffs(sub, beta, k))
        blocks.append((lo, lo + D))
        lo += D
    layer = FeatureLayer(np.vstack(Vs), np.concatenate(bs), int(seed))
    keys = tuple((tuple(beta.tolist()), k) for beta, k in specs)
    return StackedPoly(layer, np.concatenate(cs), tuple(blocks), keys)


def readout_l2_error(layer: FeatureLayer, coeffs, target, n_eval: int = 10_000, seed: int = 0) -> float:
    """Root mean squared gap between ``g(x) . coeffs`` and ``target(x)`` on the sphere."""
    x = sphere_points(stream(seed, "l2-eval"), n_eval, layer.d)
    coeffs = np.asarray(coeffs)
    chunk = max(1, 2**24 // max(layer.D, 1))
    sq = 0.0
    for lo in range(0, n_eval, chunk):
        xs = x[lo:lo + chunk]
        diff = evaluate_features(layer, xs) @ coeffs - target(xs)
        sq += float(diff @ diff)
    return math.sqrt(sq / n_eval)


def monomial_feature_count(k: int, beta_norm: float, eps: float, delta: float) -> float:
    """Width that makes the monomial readout eps-accurate in L2 with prob. 1 - delta.

    Chebyshev on the per-neuron second moment, bounded by
    ``200^2 k^5 |beta|^{2k}`` (uniform in k), gives ``2 * 200^2 k^5 |beta|^{2k} / (eps^2 delta)``.
    """
    if eps <= 0 or not 0 < delta < 1:
        raise ConfigError("need eps > 0 and 0 < delta < 1")
    return 2.0 * 200.0**2 * k**5 * beta_norm ** (2 * k) / (eps**2 * delta)


def scale_bound(k: int, beta_norm: float = 1.0) -> float:
    """Upper bound ``200 k^2 |beta|^k / (k-1)!!`` on the calibrated constant."""
    return 200.0 * k * k * beta_norm**k / double_factorial(k - 1)
