"""Spherical inputs, low-rank polynomial targets, labels and dataset splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._common import ConfigError, double_factorial, stream
from .features import sphere_points
from .losses import LOGCOSH_LABEL_BOUND

__all__ = [
    "PolyTarget",
    "SplitDataset",
    "sample_sphere",
    "sample_inputs",
    "sphere_moment",
    "monomial_l2_norm",
    "make_target",
    "random_target",
    "label",
    "make_split",
    "export_csv",
]


def sample_sphere(d: int, n: int, seed: int = 0, *names) -> np.ndarray:
    """``n`` i.i.d. points uniform on S^{d-1} (normalized standard Gaussians)."""
    if d < 1 or n < 0:
        raise ConfigError("need d >= 1 and n >= 0")
    return sphere_points(stream(seed, "sphere", *names), n, d)


def sample_inputs(d: int, n: int, rng: np.random.Generator, gaussian: bool = False) -> np.ndarray:
    """Sphere points, or the rescaled Gaussian ``N(0, I/d)`` variant when ``gaussian``."""
    if gaussian:
        return rng.standard_normal((n, d)) / math.sqrt(d)
    return sphere_points(rng, n, d)


def sphere_moment(p: int, d: int) -> float:
    """``E[x_1^{2p}]`` for x uniform on S^{d-1}: ``(2p-1)!! / prod_{j<p} (d + 2j)``."""
    # ratio of exact integers keeps precision for moderate p
    num = double_factorial(2 * p - 1)
    den = 1
    for j in range(p):
        den *= d + 2 * j
    return num / den


def monomial_l2_norm(beta, p: int, d: int | None = None) -> float:
    """``|| (beta . x)^p ||_{L2}`` under the uniform sphere measure."""
    beta = np.asarray(beta, dtype=float)
    if p < 1:
        raise ConfigError("degree must be >= 1")
    d = beta.shape[0] if d is None else d
    return float(np.linalg.norm(beta)) ** p * math.sqrt(sphere_moment(p, d))


@dataclass(frozen=True)
class PolyTarget:
    """``f*(x) = sum_s alpha_s (beta_s . x)^{p_s}``.

    ``original_beta_norms`` keeps the slope norms before L2 normalization.
    """

    alphas: tuple[float, ...]
    betas: np.ndarray
    degrees: tuple[int, ...]
    original_beta_norms: tuple[float, ...]

    @property
    def r_star(self) -> int:
        return len(self.alphas)

    @property
    def p_max(self) -> int:
        return max(self.degrees)

    @property
    def d(self) -> int:
        return self.betas.shape[1]

    @property
    def terms(self):
        return [(a, self.betas[s], p) for s, (a, p) in enumerate(zip(self.alphas, self.degrees))]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        proj = np.asarray(x, dtype=float) @ self.betas.T
        return np.sum(np.asarray(self.alphas) * proj ** np.asarray(self.degrees), axis=-1)

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "betas": self.betas.tolist(),
            "degrees": list(self.degrees),
            "original_beta_norms": list(self.original_beta_norms),
        }


def make_target(raw_terms, d: int, normalize: bool = True) -> PolyTarget:
    """Build a target from ``(alpha, beta, p)`` triples.

    With ``normalize`` each ``beta_s`` is rescaled so its monomial has unit
    L2 norm on the sphere and ``alpha_s`` is clipped to [-1, 1].
    """
    alphas, betas, degrees, norms = [], [], [], []
    for alpha, beta, p in raw_terms:
        beta = np.asarray(beta, dtype=float)
        p = int(p)
        if beta.shape != (d,):
            raise ConfigError(f"beta must have length d={d}")
        if p < 1:
            raise ConfigError("degrees must be >= 1; constants are absorbed by the loss")
        nb = float(np.linalg.norm(beta))
        if nb == 0.0:
            raise ConfigError("zero beta is not a valid term")
        norms.append(nb)
        if normalize:
            beta = beta / monomial_l2_norm(beta, p, d) ** (1.0 / p)
            alpha = float(np.clip(alpha, -1.0, 1.0))
        alphas.append(float(alpha))
        betas.append(beta)
        degrees.append(p)
    if not alphas:
        raise ConfigError("a target needs at least one term")
    return PolyTarget(tuple(alphas), np.vstack(betas), tuple(degrees), tuple(norms))


def random_target(d: int, rank: int, degree: int, seed: int = 0, alphas=None) -> PolyTarget:
    """Benchmark target: ``beta_s = sqrt(d) * (random unit vector)``, then normalized.

    Default coefficients alternate +1, -1 across terms.
    """
    if rank < 1:
        raise ConfigError("rank must be >= 1")
    rng = stream(seed, "target")
    dirs = sphere_points(rng, rank, d) * math.sqrt(d)
    if alphas is None:
        alphas = [(-1.0) ** s for s in range(rank)]
    if len(alphas) != rank:
        raise ConfigError("need one alpha per term")
    return make_target([(a, dirs[s], degree) for s, a in enumerate(alphas)], d, normalize=True)


def label(target, X, channel: str = "value", noise: float = 0.0, rng: np.random.Generator | None = None):
    """Labels from a target function.

    ``sign``: ``y = sign(f*)`` (ties to +1), each flipped with probability ``noise``.
    ``value``: ``y = clip(f*, +-1.3) + noise * N(0, 1)``, clipped again so the
    log-cosh loss stays within its supported label range.
    """
    f = target(X)
    rng = rng if rng is not None else np.random.default_rng(0)
    if channel == "sign":
        if not 0.0 <= noise <= 1.0:
            raise ConfigError("flip rate must lie in [0, 1]")
        y = np.where(f >= 0.0, 1.0, -1.0)
        flip = rng.random(len(y)) < noise
        return np.where(flip, -y, y)
    if channel == "value":
        if noise < 0:
            raise ConfigError("noise std must be >= 0")
        y = np.clip(f, -LOGCOSH_LABEL_BOUND, LOGCOSH_LABEL_BOUND)
        if noise > 0:
            y = np.clip(y + noise * rng.standard_normal(len(y)), -LOGCOSH_LABEL_BOUND, LOGCOSH_LABEL_BOUND)
        return y
    raise ConfigError(f"channel must be 'sign' or 'value', got {channel!r}")


@dataclass(frozen=True)
class SplitDataset:
    X: np.ndarray
    y: np.ndarray
    X_unlabeled: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    seed: int
    noise: str


def make_split(target, n: int, n0: int, n_test: int, seed: int, channel: str = "value",
               noise: float = 0.0, gaussian_inputs: bool = False) -> SplitDataset:
    """Train / unlabeled / test splits, each from its own named data sub-stream.

    The train draw depends only on ``(seed, n)`` through prefix order, so models
    compared at the same grid point see identical samples.
    """
    if n < 1 or n_test < 1 or n0 < 0:
        raise ConfigError("need n >= 1, n_test >= 1 and n0 >= 0")
    d = target.d
    X = sample_inputs(d, n, stream(seed, "data", "train"), gaussian_inputs)
    X_u = sample_inputs(d, n0, stream(seed, "data", "unlabeled"), gaussian_inputs)
    X_t = sample_inputs(d, n_test, stream(seed, "data", "test"), gaussian_inputs)
    y = label(target, X, channel, noise, stream(seed, "data", "train-noise"))
    y_t = label(target, X_t, channel, noise, stream(seed, "data", "test-noise"))
    return SplitDataset(X, y, X_u, X_t, y_t, int(seed), f"{channel}:{noise:g}")


def export_csv(X, y, path) -> None:
    """One row per sample: coordinates then the label."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(X.shape[1])] + ["y"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lab))])
