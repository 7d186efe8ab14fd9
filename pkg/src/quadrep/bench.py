"""Experiment configs, single runs, paired sweeps and CSV records."""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ._common import ConfigError, NumericalError, QuadrepError
from .features import evaluate_features, sample_feature_layer
from .landscape import OptimConfig, find_sosp, lambda_rule, witness_norm_bound
from .losses import get_loss
from .ntk_kernel import DEFAULT_LAMBDA_GRID, InfiniteKernel, kernel_ridge_fit
from .synth import make_split, random_target
from .taylor import Regularizer, RegularizedRisk, init_taylor_model, norm24
from .whiten import estimate_covariance

__all__ = [
    "MODELS",
    "CSV_HEADER",
    "TargetSpec",
    "ExperimentConfig",
    "ExperimentRecord",
    "StageError",
    "run_single",
    "run_sweep",
    "write_records",
    "read_records",
]

MODELS = ("quad_neural", "quad_raw", "quad_g_datadep", "ntk_neural_finite", "ntk_kernel")
CSV_HEADER = (
    "experiment_id", "model", "d", "D", "m", "n", "n0", "seed", "lambda", "train_risk", "test_risk",
    "reg_value", "norm24", "grad_norm", "min_hess_eig", "zero_predictor_risk", "wall_time_s", "error",
)
KERNEL_HOLDOUT = 0.2


class StageError(QuadrepError):
    """Wraps a failure with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise StageError(name, exc) from exc


def _strict(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {extra}")
    return cls(**raw)


@dataclass
class TargetSpec:
    rank: int = 1
    degree: int = 4
    alphas: list | None = None

    def __post_init__(self):
        if self.rank < 1 or self.degree < 1:
            raise ConfigError("target rank and degree must be >= 1")
        if self.alphas is not None and len(self.alphas) != self.rank:
            raise ConfigError("need one alpha per target term")


@dataclass
class ExperimentConfig:
    model: str = "quad_neural"
    d: int = 10
    D: int = 300
    m: int = 1024
    n: int = 4000
    n0: int = 15000
    n_test: int = 4000
    seed: int = 0
    target: TargetSpec = field(default_factory=TargetSpec)
    loss: str = "logcosh"
    channel: str = "value"
    noise: float = 0.0
    gaussian_inputs: bool = False
    lam: float | None = None
    tau: float = 0.0
    rule_M: float = 0.0
    eps: float = 0.01
    B_w_star: float | None = None
    kernel_lambda: float | None = None
    kernel_phi_prime: str = "relu"
    optimizer: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        if isinstance(self.target, dict):
            self.target = _strict(TargetSpec, self.target, "target")
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimConfig.from_dict(self.optimizer)
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        for name in ("d", "D", "m", "n", "n_test"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n0 < 1 and self.model in ("quad_neural", "quad_g_datadep"):
            raise ConfigError("whitened and data-dependent models need n0 >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        get_loss(self.loss)
        if (self.loss, self.channel) not in (("logcosh", "value"), ("logistic", "sign")):
            raise ConfigError("supported pairs are logcosh with the value channel, logistic with the sign channel")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lam must be >= 0")
        InfiniteKernel(self.kernel_phi_prime)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["optimizer"] = self.optimizer.to_dict()
        out["lambda"] = out.pop("lam")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        if "lam" in raw:
            raise ConfigError("unknown keys in config: ['lam'] (the key is 'lambda')")
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        return _strict(cls, raw, "config")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def experiment_id(self) -> str:
        return hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def resolved_lambda(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        B = self.B_w_star if self.B_w_star is not None else witness_norm_bound(self.target.rank)
        return lambda_rule(self.tau, self.rule_M, self.eps, B)


@dataclass
class ExperimentRecord:
    experiment_id: str
    model: str
    d: int
    D: int
    m: int
    n: int
    n0: int
    seed: int
    lam: float = math.nan
    train_risk: float = math.nan
    test_risk: float = math.nan
    reg_value: float = math.nan
    norm24: float = math.nan
    grad_norm: float = math.nan
    min_hess_eig: float = math.nan
    zero_predictor_risk: float = math.nan
    wall_time_s: float = math.nan
    error: str = ""

    def row(self) -> list[str]:
        vals = asdict(self)
        vals["lambda"] = vals.pop("lam")
        out = []
        for key in CSV_HEADER:
            v = vals[key]
            out.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        return out


def _effective(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.model == "quad_raw":
        return replace(cfg, D=cfg.d)
    return cfg


def _representation(cfg, data):
    """``(H_train, H_test, regularizer_metric)`` for the configured model."""
    if cfg.model == "quad_raw":
        return data.X, data.X_test, None
    layer = sample_feature_layer(cfg.d, cfg.D, use_bias=True, seed=cfg.seed)
    if cfg.model == "ntk_neural_finite":
        s = 1.0 / math.sqrt(cfg.D)
        return evaluate_features(layer, data.X) * s, evaluate_features(layer, data.X_test) * s, None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = estimate_covariance(layer, data.X_unlabeled)
    if cfg.model == "quad_neural":
        return rep.transform(data.X), rep.transform(data.X_test), None
    return evaluate_features(layer, data.X), evaluate_features(layer, data.X_test), rep.sqrt


def _kernel_run(cfg, data, loss, rec):
    kernel = InfiniteKernel(cfg.kernel_phi_prime)
    lam = cfg.kernel_lambda
    if lam is None:
        # choose the ridge on a held-out slice of the training set
        n_val = max(1, int(round(KERNEL_HOLDOUT * cfg.n)))
        if cfg.n - n_val < 1:
            raise ConfigError("training set too small to select the kernel ridge")
        Xa, ya, Xv, yv = data.X[n_val:], data.y[n_val:], data.X[:n_val], data.y[:n_val]
        Ka, Kv = kernel.gram(Xa), kernel.gram(Xv, Xa)
        scores = []
        for cand in DEFAULT_LAMBDA_GRID:
            pred = kernel_ridge_fit(Xa, ya, float(cand), kernel, K=Ka)
            scores.append(float(np.mean(loss.value(Kv @ pred.dual_coeffs, yv))))
        lam = float(DEFAULT_LAMBDA_GRID[int(np.argmin(scores))])
    K = kernel.gram(data.X)
    pred = kernel_ridge_fit(data.X, data.y, lam, kernel, K=K)
    resid = (K + lam * cfg.n * np.eye(cfg.n)) @ pred.dual_coeffs - data.y
    rec.lam = lam
    rec.train_risk = float(np.mean(loss.value(K @ pred.dual_coeffs, data.y)))
    rec.test_risk = float(np.mean(loss.value(pred.predict(data.X_test), data.y_test)))
    rec.reg_value = lam * float(pred.dual_coeffs @ K @ pred.dual_coeffs)
    rec.norm24 = pred.rkhs_norm(K)
    rec.grad_norm = float(np.linalg.norm(resid))
    rec.min_hess_eig = float(np.linalg.eigvalsh(K)[0]) / cfg.n + lam if cfg.n <= 4000 else lam


def run_single(cfg: ExperimentConfig, trace: list | None = None) -> ExperimentRecord:
    """Full pipeline for one config: data, representation, model, optimization, evaluation."""
    cfg = _effective(cfg)
    t0 = time.perf_counter()
    rec = ExperimentRecord(cfg.experiment_id(), cfg.model, cfg.d, cfg.D, cfg.m, cfg.n, cfg.n0, cfg.seed)
    loss = get_loss(cfg.loss)
    with _stage("data"):
        target = random_target(cfg.d, cfg.target.rank, cfg.target.degree, cfg.seed, cfg.target.alphas)
        n0 = cfg.n0 if cfg.model in ("quad_neural", "quad_g_datadep") else 0
        data = make_split(target, cfg.n, n0, cfg.n_test, cfg.seed, cfg.channel, cfg.noise, cfg.gaussian_inputs)
        rec.zero_predictor_risk = float(np.mean(loss.value(np.zeros_like(data.y_test), data.y_test)))
    if cfg.model == "ntk_kernel":
        with _stage("kernel"):
            _kernel_run(cfg, data, loss, rec)
        rec.wall_time_s = time.perf_counter() - t0
        return rec
    with _stage("representation"):
        H, H_test, sigma_half = _representation(cfg, data)
    with _stage("model"):
        kind = "linearized" if cfg.model == "ntk_neural_finite" else "quadratic"
        model = init_taylor_model(cfg.m, cfg.D, kind, cfg.seed)
        lam = cfg.resolved_lambda()
        if cfg.model == "ntk_neural_finite":
            reg = Regularizer("frobenius", lam)
        elif cfg.model == "quad_g_datadep":
            reg = Regularizer("data_dependent", lam, sigma_half)
        else:
            reg = Regularizer("norm24", lam)
        objective = RegularizedRisk(model, loss, H, data.y, reg)
    with _stage("optimize"):
        opt = replace(cfg.optimizer, seed=cfg.seed)
        W, cert = find_sosp(objective, model.W, opt, trace)
    with _stage("evaluate"):
        test_obj = RegularizedRisk(model, loss, H_test, data.y_test)
        rec.lam = lam
        rec.train_risk = cert.plain_risk
        rec.test_risk = test_obj.plain_value(W)
        rec.reg_value = cert.reg_risk - cert.plain_risk
        rec.norm24 = norm24(W)
        rec.grad_norm = cert.grad_norm
        rec.min_hess_eig = cert.min_hess_eig_est
        vals = [rec.train_risk, rec.test_risk, rec.reg_value, rec.norm24, rec.grad_norm, rec.min_hess_eig]
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite metric in the experiment record")
    rec.wall_time_s = time.perf_counter() - t0
    return rec


def run_sweep(base: ExperimentConfig, axis: str, grid, seeds, models=None, on_record=None) -> list[ExperimentRecord]:
    """One record per (grid value, seed, model); failures become rows with ``error`` set.

    Every model at a grid point uses the same seed, hence the same data sub-streams.
    """
    if axis not in ("n", "d", "D", "m"):
        raise ConfigError("sweep axis must be one of n, d, D, m")
    grid, seeds = list(grid), list(seeds)
    if not grid or not seeds:
        raise ConfigError("sweep grid and seed list must be nonempty")
    models = list(models) if models else [base.model]
    out = []
    for value in grid:
        for seed in seeds:
            for model in models:
                cfg = replace(base, model=model, seed=int(seed), **{axis: int(value)})
                cfg.__post_init__()
                try:
                    rec = run_single(cfg)
                except (QuadrepError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                    eff = _effective(cfg)
                    rec = ExperimentRecord(eff.experiment_id(), model, eff.d, eff.D, eff.m, eff.n, eff.n0,
                                           int(seed), error=str(exc).replace("\n", " "))
                out.append(rec)
                if on_record is not None:
                    on_record(rec)
    return out


def write_records(records, path_or_file, header: bool = True) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        if header:
            w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(rec.row())
    finally:
        if own:
            fh.close()


def read_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

