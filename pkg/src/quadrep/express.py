"""Explicit witness weights showing a quadratic model on whitened features fits a target.

For a target ``sum_s alpha_s (beta_s . x)^{p_s}`` the construction assigns each
term a group of ``m0 = floor(m / (3 r*))`` neurons whose output sign ``a_r``
matches the sign of the contribution, and sets every row of the group to

    w_r = scale_s * Sigma_hat^{1/2} theta_s,    scale_s = 2 sqrt|alpha_s| (3 r*)^{1/4} m0^{-1/4},

where ``theta_s . g(x)`` approximates ``(beta_s . x)^{p_s/2}``.  Because
``h = Sigma_hat^{-1/2} g``, the row reads ``w_r . h = scale_s theta_s . g``, and
averaging the gates (about half are open) yields ``alpha_s (theta_s . g)^2``.

Odd degrees ``2k+1`` use ``t^{2k+1} = A^2 - B^2`` with
``A = (t^{k+1} + t^k)/2`` and ``B = (t^{k+1} - t^k)/2``, so they take one group
of each sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._common import ConfigError, stream
from .features import StackedPoly, evaluate_features, sphere_points, stacked_poly_coeffs
from .synth import PolyTarget
from .taylor import TaylorModel, forward
from .whiten import WhitenedRep

__all__ = [
    "WitnessGroup",
    "WitnessPlan",
    "readout_specs",
    "plan_witness_layer",
    "build_witness",
    "witness_l2_error",
    "indicator_concentration_stat",
    "concentration_bound",
    "opposite_sign_probability",
]

READOUTS = ("hermite", "projection")


@dataclass
class WitnessGroup:
    term: int
    part: str  # "square" for even degrees, "A" / "B" for the odd split
    sign: int
    rows: list[int]
    scale: float
    blocks: list[tuple[int, int]]


@dataclass
class WitnessPlan:
    m0: int
    r_star: int
    readout: str
    groups: list[WitnessGroup]

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "WitnessPlan":
        raw = json.loads(text)
        raw["groups"] = [WitnessGroup(**{**g, "blocks": [tuple(b) for b in g["blocks"]]}) for g in raw["groups"]]
        return cls(**raw)


def readout_specs(target: PolyTarget):
    """``(beta, k)`` blocks each term needs: ``p/2`` when even, ``(p+1)/2`` and ``(p-1)/2`` when odd."""
    specs = []
    for _, beta, p in target.terms:
        if p % 2 == 0:
            specs.append((beta, p // 2))
        else:
            specs.extend([(beta, (p + 1) // 2), (beta, (p - 1) // 2)])
    return specs


def plan_witness_layer(target: PolyTarget, D: int, seed: int = 0) -> StackedPoly:
    """Stacked layer of total width about ``D`` with one equal block per readout spec."""
    specs = readout_specs(target)
    per = D // len(specs)
    if per < 1:
        raise ConfigError(f"D={D} is too small for {len(specs)} readout blocks")
    return stacked_poly_coeffs(specs, [per] * len(specs), seed)


def _find_block(stacked: StackedPoly, beta, k):
    key = (tuple(np.asarray(beta, dtype=float).tolist()), int(k))
    for idx, spec in enumerate(stacked.specs):
        if spec == key:
            return idx
    raise ConfigError(f"stacked layer has no block for degree {k} of a target term")


def _group_readouts(target, stacked, readout, rep, x_unlabeled):
    """Per-group ``(term, part, sign, theta, block list)`` with ``theta`` of length D."""
    out = []
    for s, (alpha, beta, p) in enumerate(target.terms):
        sgn = 1 if alpha >= 0 else -1
        if p % 2 == 0:
            i = _find_block(stacked, beta, p // 2)
            parts = [("square", sgn, {i: 1.0}, lambda t: t ** (p // 2))]
        else:
            k = (p - 1) // 2
            hi, lo = _find_block(stacked, beta, k + 1), _find_block(stacked, beta, k)
            parts = [
                ("A", sgn, {hi: 0.5, lo: 0.5}, lambda t, k=k: 0.5 * (t ** (k + 1) + t**k)),
                ("B", -sgn, {hi: 0.5, lo: -0.5}, lambda t, k=k: 0.5 * (t ** (k + 1) - t**k)),
            ]
        for part, sign, mix, poly in parts:
            if readout == "hermite":
                theta = sum(w * stacked.term_readout(i) for i, w in mix.items())
            else:
                X = np.asarray(x_unlabeled, dtype=float)
                G = evaluate_features(stacked.layer, X)
                moment = G.T @ poly(X @ beta) / X.shape[0]
                theta = rep.inv_sqrt @ (rep.inv_sqrt @ moment)
            out.append((s, part, sign, theta, [stacked.blocks[i] for i in mix]))
    return out


def build_witness(target: PolyTarget, stacked: StackedPoly, rep: WhitenedRep, model: TaylorModel,
                  readout: str = "projection", x_unlabeled=None):
    """Witness weights ``W*`` (m x D) and the plan that produced them.

    ``readout="projection"`` (default) uses the least-squares readout
    ``Sigma_hat^+ E_hat[g F]`` computed on ``x_unlabeled``, the same sample
    that produced ``rep``.  ``readout="hermite"`` uses the gated Hermite
    coefficients of the stacked layer; its sampling error is far larger at
    desk-scale D.
    """
    if readout not in READOUTS:
        raise ConfigError(f"readout must be one of {READOUTS}")
    if readout == "projection" and x_unlabeled is None:
        raise ConfigError("projection readout needs the unlabeled inputs behind rep")
    if rep.layer is not stacked.layer and not np.array_equal(rep.layer.V, stacked.layer.V):
        raise ConfigError("rep must whiten the stacked layer")
    if model.D != stacked.layer.D:
        raise ConfigError("model width D must match the stacked layer")
    r_star = target.r_star
    m0 = model.m // (3 * r_star)
    if m0 < 1:
        raise ConfigError(f"m={model.m} is too small for {r_star} terms")
    buckets = {1: list(np.flatnonzero(model.a > 0)), -1: list(np.flatnonzero(model.a < 0))}
    W = np.zeros((model.m, model.D))
    groups = []
    for s, part, sign, theta, blocks in _group_readouts(target, stacked, readout, rep, x_unlabeled):
        alpha = target.alphas[s]
        if len(buckets[sign]) < m0:
            raise ConfigError(f"not enough neurons with a_r = {sign:+d} for term {s} ({len(buckets[sign])} < {m0})")
        rows, buckets[sign] = buckets[sign][:m0], buckets[sign][m0:]
        scale = 2.0 * math.sqrt(abs(alpha)) * (3.0 * r_star) ** 0.25 * m0**-0.25
        W[rows] = scale * (rep.sqrt @ theta)
        groups.append(WitnessGroup(s, part, sign, [int(r) for r in rows], scale, [tuple(map(int, b)) for b in blocks]))
    return W, WitnessPlan(m0, r_star, readout, groups)


def witness_l2_error(model: TaylorModel, W_star, rep: WhitenedRep, target, n_eval: int = 10_000, seed: int = 0) -> float:
    """Root mean squared gap between the witness model and the target on fresh sphere points."""
    X = sphere_points(stream(seed, "witness-eval"), n_eval, rep.layer.d)
    diff = forward(model.with_weights(W_star), rep.transform(X)) - target(X)
    return float(np.sqrt(np.mean(diff * diff)))


def indicator_concentration_stat(W0_rows, probes) -> float:
    """``max_i |(2/m0) sum_r 1{w0_r . h_i >= 0} - 1|`` over the probe representations."""
    W0_rows = np.atleast_2d(np.asarray(W0_rows, dtype=float))
    H = np.atleast_2d(np.asarray(probes, dtype=float))
    frac = np.mean(H @ W0_rows.T >= 0.0, axis=1)
    return float(np.max(np.abs(2.0 * frac - 1.0)))


def concentration_bound(D: int, m0: int, delta: float) -> float:
    """``6 sqrt(D log(3 m0) (1 + log(2/delta)) / m0)``."""
    if not 0 < delta < 1 or m0 < 1:
        raise ConfigError("need 0 < delta < 1 and m0 >= 1")
    return 6.0 * math.sqrt(D * math.log(3 * m0) * (1.0 + math.log(2.0 / delta)) / m0)


def opposite_sign_probability(rho):
    """``P(sign(u) != sign(v)) = arccos(rho) / pi`` for standard normals with correlation rho."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise ConfigError("correlation must lie in [-1, 1]")
    return np.arccos(rho) / np.pi
