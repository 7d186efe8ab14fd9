"""Regularization strength rule and a certified second-order stationary point search.

Any objective with ``value``, ``grad`` and ``hvp`` (and optionally
``plain_value``, ``hess_form``, ``norm24``) methods over arrays of a fixed
shape can be optimized; :class:`quadrep.taylor.RegularizedRisk` is the main one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import LinearOperator

from ._common import ConfigError, NumericalError, stream
from .taylor import norm24

__all__ = [
    "lambda_rule",
    "witness_norm_bound",
    "OptimConfig",
    "SospCertificate",
    "min_hess_eig_estimate",
    "find_sosp",
    "min_hess_eig_pair",
    "stationary_norm_bound",
    "stationary_norm_bound_check",
    "landscape_width",
]

ARMIJO = 1e-4


def witness_norm_bound(r_star: float) -> float:
    """Constructive bound ``(108 r*^2)^{1/4}`` on ``|W*|_{2,4}``."""
    return (108.0 * r_star**2) ** 0.25


def lambda_rule(tau: float, M: float, eps: float, B: float) -> float:
    """``(2 tau M + eps) / (36 B^4)``."""
    if B <= 0 or not math.isfinite(B):
        raise ConfigError("norm bound B must be positive and finite")
    if tau < 0 or M < 0 or eps <= 0:
        raise ConfigError("need tau >= 0, M >= 0, eps > 0")
    return (2.0 * tau * M + eps) / (36.0 * B**4)


def landscape_width(eps: float, lam0: float, C: float, B_h: float, B_w: float) -> float:
    """Width ``eps^-1 (2 lam0)^{-1/2} C^2 B_h^4 B_w^4`` past which the landscape is benign."""
    if eps <= 0 or lam0 <= 0:
        raise ConfigError("need eps > 0 and lam0 > 0")
    return C**2 * B_h**4 * B_w**4 / (eps * math.sqrt(2.0 * lam0))


@dataclass
class OptimConfig:
    step_size: float = 100.0
    max_iters: int = 2000
    grad_tol: float | None = None
    hess_tol: float = 1e-2
    perturb_radius: float = 1e-3
    escape_steps: int = 50
    probes: int = 8
    eig_method: str = "lanczos"
    krylov_steps: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0 or self.max_iters < 1 or self.escape_steps < 0 or self.probes < 1:
            raise ConfigError("step_size, max_iters and probes must be positive, escape_steps >= 0")
        if self.krylov_steps < 2:
            raise ConfigError("krylov_steps must be >= 2")
        if self.hess_tol <= 0 or self.perturb_radius <= 0 or (self.grad_tol is not None and self.grad_tol <= 0):
            raise ConfigError("tolerances and perturb_radius must be positive")
        if self.eig_method not in ("lanczos", "power"):
            raise ConfigError("eig_method must be 'lanczos' or 'power'")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown optimizer keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SospCertificate:
    grad_norm: float
    min_hess_eig_est: float
    reg_risk: float
    plain_risk: float
    norm24_value: float
    iters: int

    def to_dict(self) -> dict:
        return asdict(self)


def _flat_operator(objective, W):
    shape = W.shape

    def mv(v):
        return objective.hvp(W, np.asarray(v).reshape(shape)).ravel()

    n = int(np.prod(shape))
    return LinearOperator((n, n), matvec=mv, dtype=float)


def _power_min_eig(op, n, probes, rng, iters=200, tol=1e-8):
    # largest magnitude first, then block power on (s I - Hess)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    top = 0.0
    for _ in range(50):
        w = op.matvec(v)
        top = float(np.linalg.norm(w))
        if top == 0.0:
            return 0.0, v
        v = w / top
    shift = 1.05 * top
    X, _ = np.linalg.qr(rng.standard_normal((n, probes)))
    prev = np.inf
    for _ in range(iters):
        HX = np.column_stack([op.matvec(X[:, j]) for j in range(X.shape[1])])
        T = X.T @ HX
        evals, evecs = np.linalg.eigh(0.5 * (T + T.T))
        if abs(evals[0] - prev) <= tol * max(1.0, abs(evals[0])):
            break
        prev = evals[0]
        X, _ = np.linalg.qr(shift * X - HX)
    return float(evals[0]), X @ evecs[:, 0]


def _lanczos_min(op, n, steps, rng, tol=1e-10):
    """Smallest Ritz pair after at most ``steps`` Lanczos steps with full reorthogonalization."""
    steps = min(steps, n)
    Q = np.empty((steps, n))
    alpha, beta = [], []
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    for j in range(steps):
        Q[j] = q
        w = op.matvec(q)
        alpha.append(float(q @ w))
        w = w - Q[: j + 1].T @ (Q[: j + 1] @ w)
        w = w - Q[: j + 1].T @ (Q[: j + 1] @ w)
        b = float(np.linalg.norm(w))
        evals, evecs = eigh_tridiagonal(np.array(alpha), np.array(beta)) if j else (np.array(alpha), np.ones((1, 1)))
        resid = b * abs(evecs[-1, 0])
        if resid <= tol * max(1.0, abs(evals[0])) or b == 0.0 or j == steps - 1:
            return float(evals[0]), Q[: j + 1].T @ evecs[:, 0]
        beta.append(b)
        q = w / b
    raise AssertionError("unreachable")


def min_hess_eig_estimate(objective, W, probes: int = 8, seed: int = 0, method: str = "lanczos",
                          krylov_steps: int = 40) -> float:
    """Estimate of the smallest Hessian eigenvalue at ``W`` from Hessian-vector products.

    ``lanczos`` runs at most ``krylov_steps`` Lanczos steps from a seeded start
    vector and is exact once that budget reaches the dimension; ``power``
    runs shifted block power iteration with ``probes`` vectors.
    """
    return min_hess_eig_pair(objective, W, probes, seed, method, krylov_steps)[0]


def min_hess_eig_pair(objective, W, probes: int = 8, seed: int = 0, method: str = "lanczos",
                      krylov_steps: int = 40):
    """``(eigenvalue, unit eigenvector shaped like W)`` behind :func:`min_hess_eig_estimate`."""
    if probes < 1 or krylov_steps < 2:
        raise ConfigError("need probes >= 1 and krylov_steps >= 2")
    W = np.asarray(W, dtype=float)
    n = W.size
    rng = stream(seed, "hessian-probe")
    op = _flat_operator(objective, W)
    if n <= probes + 2:
        Hm = np.column_stack([op.matvec(e) for e in np.eye(n)])
        evals, evecs = np.linalg.eigh(0.5 * (Hm + Hm.T))
        return float(evals[0]), evecs[:, 0].reshape(W.shape)
    if method == "power":
        val, vec = _power_min_eig(op, n, probes, rng)
    else:
        val, vec = _lanczos_min(op, n, krylov_steps, rng)
    if not np.isfinite(val):
        raise NumericalError("Hessian eigenvalue estimate is not finite")
    vec = vec / np.linalg.norm(vec)
    return val, vec.reshape(W.shape)


def _plain(objective, W):
    return objective.plain_value(W) if hasattr(objective, "plain_value") else objective.value(W)


def _trial_value(objective, W):
    """Objective value, or ``inf`` when the trial point overflows."""
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            return objective.value(W)
        except NumericalError:
            return math.inf


def _escape(objective, W, rng, step, cfg):
    Wp = W + _ball(rng, W.shape, cfg.perturb_radius)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.escape_steps):
            try:
                Wp = Wp - step * objective.grad(Wp)
            except NumericalError:
                return Wp, math.inf
    return Wp, _trial_value(objective, Wp)


def _ball(rng, shape, radius):
    z = rng.standard_normal(shape)
    u = rng.random() ** (1.0 / z.size)
    return radius * u * z / np.linalg.norm(z)


def _certificate(objective, W, iters, cfg, grad=None):
    G = objective.grad(W) if grad is None else grad
    lam_min = min_hess_eig_estimate(objective, W, cfg.probes, cfg.seed, cfg.eig_method, cfg.krylov_steps)
    return SospCertificate(
        grad_norm=float(np.linalg.norm(G)),
        min_hess_eig_est=lam_min,
        reg_risk=float(objective.value(W)),
        plain_risk=float(_plain(objective, W)),
        norm24_value=norm24(W) if W.ndim == 2 else float(np.linalg.norm(W)),
        iters=int(iters),
    )


def find_sosp(objective, W_init, config: OptimConfig | None = None, trace: list | None = None):
    """Perturbed gradient descent with Armijo backtracking.

    Returns ``(W_hat, certificate)``.  When ``trace`` is a list, one dict per
    iteration (``iter, risk, reg_risk, grad_norm, step, event``) is appended.
    """
    cfg = config or OptimConfig()
    rng = stream(cfg.seed, "perturbation")
    W = np.array(W_init, dtype=float)
    val = objective.value(W)
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-4 * (1.0 + _plain(objective, W))
    escape_gain = cfg.hess_tol * cfg.perturb_radius**2 / 2.0
    step = cfg.step_size
    G = objective.grad(W)

    def log(it, event, gn):
        if trace is not None:
            trace.append(dict(iter=it, risk=_plain(objective, W), reg_risk=val, grad_norm=gn, step=step, event=event))

    for it in range(1, cfg.max_iters + 1):
        gn = float(np.linalg.norm(G))
        if gn <= grad_tol:
            Wp, vp = _escape(objective, W, rng, step, cfg)
            if val - vp > escape_gain:
                W, val = Wp, vp
                G = objective.grad(W)
                log(it, "escape", float(np.linalg.norm(G)))
                continue
            lam_min, u = min_hess_eig_pair(objective, W, cfg.probes, cfg.seed, cfg.eig_method, cfg.krylov_steps)
            if lam_min >= -cfg.hess_tol:
                log(it, "certified", gn)
                return W, _certificate(objective, W, it, cfg, G)
            W, val = _curvature_step(objective, W, val, u, cfg.perturb_radius)
            G = objective.grad(W)
            log(it, "curvature_step", float(np.linalg.norm(G)))
            continue

        t = min(cfg.step_size, 2.0 * step)
        while True:
            Wt = W - t * G
            vt = _trial_value(objective, Wt)
            if vt <= val - ARMIJO * t * gn * gn:
                break
            t *= 0.5
            if t < 1e-30:
                raise NumericalError("backtracking failed to find a descent step")
        W, val, step = Wt, vt, t
        G = objective.grad(W)
        log(it, "step", float(np.linalg.norm(G)))

    log(cfg.max_iters, "max_iters", float(np.linalg.norm(G)))
    return W, _certificate(objective, W, cfg.max_iters, cfg, G)


def _curvature_step(objective, W, val, u, radius):
    """Move along +-u with doubling length while the objective keeps dropping."""
    best_W, best_v = W, val
    for sign in (1.0, -1.0):
        length = radius
        for _ in range(60):
            Wt = W + sign * length * u
            vt = _trial_value(objective, Wt)
            if vt >= best_v:
                break
            best_W, best_v = Wt, vt
            length *= 2.0
    return best_W, best_v


def stationary_norm_bound(lam: float, slack: float = 1.05) -> float:
    """``slack * (2 lam)^{-1/4}``; infinite when ``lam = 0``."""
    return math.inf if lam <= 0 else slack * (2.0 * lam) ** -0.25


def stationary_norm_bound_check(W_hat, lam: float, slack: float = 1.05) -> bool:
    """``|W_hat|_{2,4} <= slack * (2 lam)^{-1/4}``; accepts weights or a certificate."""
    value = W_hat.norm24_value if isinstance(W_hat, SospCertificate) else norm24(np.asarray(W_hat))
    return bool(value <= stationary_norm_bound(lam, slack))
