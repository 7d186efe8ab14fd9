"""Covariance estimation and whitening of random indicator features."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._common import ConfigError, NumericalError, as_batch
from .features import FeatureLayer, evaluate_features

__all__ = [
    "WhitenedRep",
    "second_moment",
    "inverse_sqrt",
    "estimate_covariance",
    "rep_from_moment",
    "whiten",
    "population_covariance",
    "hadamard_power_min_eig",
    "relative_concentration",
    "heldout_second_moment_opnorm",
]

EIG_FLOOR_ABS = 1e-10
EIG_FLOOR_REL = 1e-8


@dataclass(frozen=True)
class WhitenedRep:
    """Feature layer plus the whitening map estimated from unlabeled inputs.

    ``inv_sqrt`` is the pseudo inverse square root of ``sigma_hat``; eigen
    directions below ``eig_floor`` are mapped to zero and counted in
    ``n_floored``.  ``sqrt`` is the matching square root on the kept subspace,
    so ``sqrt @ inv_sqrt`` is the orthogonal projector onto it.
    """

    layer: FeatureLayer
    sigma_hat: np.ndarray
    inv_sqrt: np.ndarray
    sqrt: np.ndarray
    eig_floor: float
    n_floored: int
    n0: int
    min_eig: float
    max_eig: float

    @property
    def D(self) -> int:
        return self.layer.D

    def transform(self, x: np.ndarray) -> np.ndarray:
        """h(x) = inv_sqrt @ g(x); accepts one input or a batch."""
        return evaluate_features(self.layer, x) @ self.inv_sqrt


def second_moment(g: np.ndarray) -> np.ndarray:
    """Uncentered second moment ``G^T G / n0`` of a feature batch."""
    G, _ = as_batch(g)
    if G.shape[0] < 1:
        raise ConfigError("need at least one unlabeled sample")
    S = G.T @ G / G.shape[0]
    return 0.5 * (S + S.T)


def inverse_sqrt(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Eigen-decomposition based ``(inv_sqrt, sqrt, floor, n_floored)``."""
    return _eig_maps(sigma)[:4]


def _eig_maps(sigma):
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("covariance has non-finite entries")
    evals, evecs = np.linalg.eigh(sigma)
    top = max(float(evals[-1]), 0.0)
    floor = max(EIG_FLOOR_ABS, EIG_FLOOR_REL * top)
    keep = evals >= floor
    safe = np.where(keep, evals, 1.0)
    inv_diag = np.where(keep, 1.0 / np.sqrt(safe), 0.0)
    sq_diag = np.where(keep, np.sqrt(safe), 0.0)
    inv_sqrt = (evecs * inv_diag) @ evecs.T
    sqrt = (evecs * sq_diag) @ evecs.T
    return 0.5 * (inv_sqrt + inv_sqrt.T), 0.5 * (sqrt + sqrt.T), floor, int((~keep).sum()), evals


def rep_from_moment(layer: FeatureLayer, sigma: np.ndarray, n0: int) -> WhitenedRep:
    """Whitening map for a given second-moment matrix.

    Floored directions are reported through ``RuntimeWarning``, never raised.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (layer.D, layer.D):
        raise ConfigError(f"second moment must be {layer.D} x {layer.D}")
    inv, sq, floor, n_floored, evals = _eig_maps(sigma)
    if n_floored:
        warnings.warn(
            f"{n_floored} of {layer.D} covariance directions fell below {floor:.3g} and were projected out",
            RuntimeWarning,
            stacklevel=2,
        )
    return WhitenedRep(layer, sigma, inv, sq, floor, n_floored, int(n0), float(evals[0]), float(evals[-1]))


def estimate_covariance(layer: FeatureLayer, unlabeled: np.ndarray) -> WhitenedRep:
    """Second moment of ``g`` over the unlabeled inputs, plus its whitening map."""
    X, _ = as_batch(unlabeled)
    return rep_from_moment(layer, second_moment(evaluate_features(layer, X)), X.shape[0])


def whiten(rep: WhitenedRep, g: np.ndarray) -> np.ndarray:
    """h = inv_sqrt @ g for one feature vector or a batch of them."""
    G = np.asarray(g, dtype=float)
    if G.shape[-1] != rep.D:
        raise ConfigError(f"feature vector length {G.shape[-1]} does not match D={rep.D}")
    return G @ rep.inv_sqrt


def population_covariance(layer: FeatureLayer) -> np.ndarray:
    """Closed-form ``E_x[g(x) g(x)^T]`` for ``x`` uniform on the sphere.

    Without biases this is exact: ``(pi - arccos rho_ij) / (2 pi)``.  With
    biases the same orthant formula is applied to the augmented rows
    ``(v_i, b_i)``; that treats ``(x, 1)`` as rotationally symmetric, which
    it is not, so the biased version is an approximation.
    """
    U = layer.V if layer.b is None else np.hstack([layer.V, layer.b[:, None]])
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    C = np.clip(U @ U.T, -1.0, 1.0)
    S = 0.25 + np.arcsin(C) / (2 * np.pi)
    np.fill_diagonal(S, 0.5)
    return S


def hadamard_power_min_eig(layer: FeatureLayer, k: int) -> float:
    """Smallest eigenvalue of ``(V~ V~^T)^{o(k+1)}`` with unit-norm rows ``V~``."""
    if k < 0:
        raise ConfigError("k must be non-negative")
    Vt = layer.V / np.linalg.norm(layer.V, axis=1, keepdims=True)
    G = Vt @ Vt.T
    return float(np.linalg.eigvalsh(G ** (k + 1))[0])


def relative_concentration(rep, sigma_ref: np.ndarray) -> float:
    """``|| sigma_ref^{-1/2} sigma_hat sigma_ref^{-1/2} - I ||_op``.

    ``rep`` may be a :class:`WhitenedRep` or a bare second-moment matrix.
    """
    sigma_hat = rep.sigma_hat if isinstance(rep, WhitenedRep) else np.asarray(rep, dtype=float)
    evals, evecs = np.linalg.eigh(sigma_ref)
    if evals[0] <= 1e-12:
        raise NumericalError(f"reference covariance is not positive definite (min eigenvalue {evals[0]:.3g})")
    inv = (evecs / np.sqrt(evals)) @ evecs.T
    M = inv @ sigma_hat @ inv
    return float(np.max(np.abs(np.linalg.eigvalsh(M - np.eye(M.shape[0])))))


def heldout_second_moment_opnorm(rep: WhitenedRep, x_heldout: np.ndarray) -> float:
    """Operator norm of ``E[h h^T]`` estimated on inputs not used for whitening."""
    H = rep.transform(x_heldout)
    return float(np.linalg.eigvalsh(H.T @ H / H.shape[0])[-1])
