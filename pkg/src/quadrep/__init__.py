"""Quadratic Taylor models on whitened random indicator features.

Submodules: ``features`` (indicator layers, Hermite readouts), ``whiten``
(second-moment estimation and whitening), ``taylor`` (models, risks,
derivatives), ``landscape`` (regularization rule, saddle-escaping descent),
``synth`` (targets and splits), ``ntk_kernel`` (infinite-width kernel and
ridge baseline), ``express`` (witness weights), ``bench`` (configs, runs,
sweeps), ``verify`` (self-check battery) and ``cli``.
"""

from ._common import ConfigError, NumericalError, QuadrepError
from .bench import ExperimentConfig, ExperimentRecord, run_single, run_sweep
from .express import build_witness, plan_witness_layer
from .features import FeatureLayer, evaluate_features, hermite_coeff_indicator, sample_feature_layer
from .landscape import OptimConfig, SospCertificate, find_sosp, lambda_rule
from .ntk_kernel import InfiniteKernel, h_infinity, kernel_ridge_fit, lower_bound_run
from .synth import make_split, make_target, random_target
from .taylor import Regularizer, RegularizedRisk, TaylorModel, init_taylor_model
from .verify import run_verify
from .whiten import WhitenedRep, estimate_covariance, population_covariance

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "NumericalError", "QuadrepError",
    "ExperimentConfig", "ExperimentRecord", "run_single", "run_sweep",
    "build_witness", "plan_witness_layer",
    "FeatureLayer", "evaluate_features", "hermite_coeff_indicator", "sample_feature_layer",
    "OptimConfig", "SospCertificate", "find_sosp", "lambda_rule",
    "InfiniteKernel", "h_infinity", "kernel_ridge_fit", "lower_bound_run",
    "make_split", "make_target", "random_target",
    "Regularizer", "RegularizedRisk", "TaylorModel", "init_taylor_model",
    "run_verify",
    "WhitenedRep", "estimate_covariance", "population_covariance",
]
