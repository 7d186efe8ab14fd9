import math
import warnings

import numpy as np
import pytest

from quadrep._common import ConfigError, stream
from quadrep.express import (WitnessPlan, build_witness, concentration_bound, indicator_concentration_stat,
                             opposite_sign_probability, plan_witness_layer, readout_specs, witness_l2_error)
from quadrep.features import evaluate_features, sphere_points
from quadrep.landscape import witness_norm_bound
from quadrep.synth import make_target, random_target
from quadrep.taylor import forward, init_taylor_model, norm24
from quadrep.whiten import estimate_covariance


def _setup(target, D, m, n0, seed=0):
    stacked = plan_witness_layer(target, D, seed)
    X = sphere_points(stream(seed, "data", "unlabeled"), n0, target.d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = estimate_covariance(stacked.layer, X)
    model = init_taylor_model(m, stacked.layer.D, "quadratic", seed)
    return stacked, rep, model, X


def test_readout_specs_split_odd_degrees():
    beta = np.array([1.0, 0.0, 0.0])
    t = make_target([(1.0, beta, 4), (1.0, beta, 3)], 3, normalize=False)
    assert [k for _, k in readout_specs(t)] == [2, 2, 1]


def test_plan_rejects_tiny_layers():
    with pytest.raises(ConfigError):
        plan_witness_layer(random_target(3, 2, 3), 1)


@pytest.mark.parametrize("readout", ["projection", "hermite"])
def test_groups_and_norm_bound(readout):
    target = random_target(4, 2, 3, seed=1)
    stacked, rep, model, X = _setup(target, 240, 120, 4000)
    W, plan = build_witness(target, stacked, rep, model, readout=readout, x_unlabeled=X)
    m0 = 120 // 6
    assert plan.m0 == m0 and len(plan.groups) == 4
    for g in plan.groups:
        assert len(g.rows) == m0
        assert np.all(model.a[g.rows] == g.sign)
    used = sorted(r for g in plan.groups for r in g.rows)
    assert len(used) == len(set(used))
    unused = np.setdiff1d(np.arange(120), used)
    assert np.all(W[unused] == 0)
    assert plan.groups[0].scale == pytest.approx(2 * (3 * 2) ** 0.25 * m0**-0.25)
    if readout == "projection":
        assert norm24(W) ** 4 <= witness_norm_bound(2) ** 4 * (1 + 1e-9)


def test_plan_json_round_trip():
    target = random_target(3, 1, 2, seed=0)
    stacked, rep, model, X = _setup(target, 60, 30, 2000)
    _, plan = build_witness(target, stacked, rep, model, x_unlabeled=X)
    assert WitnessPlan.from_json(plan.to_json()) == plan


def test_readout_identity_cancels_whitening():
    target = random_target(10, 1, 2, seed=2)
    stacked, rep, model, X = _setup(target, 40, 12, 5000)
    assert rep.n_floored == 0
    W, plan = build_witness(target, stacked, rep, model, readout="hermite")
    g = plan.groups[0]
    Xe = sphere_points(stream(0, "probe"), 50, 10)
    lhs = rep.transform(Xe) @ W[g.rows[0]]
    rhs = g.scale * evaluate_features(stacked.layer, Xe) @ stacked.term_readout(0)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8, atol=1e-10)


def test_group_isolation():
    target = random_target(4, 2, 2, seed=3)
    stacked, rep, model, X = _setup(target, 120, 60, 4000)
    W, plan = build_witness(target, stacked, rep, model, x_unlabeled=X)
    H = rep.transform(sphere_points(stream(0, "iso"), 30, 4))
    parts = []
    for g in plan.groups:
        Wg = np.zeros_like(W)
        Wg[g.rows] = W[g.rows]
        parts.append(forward(model.with_weights(Wg), H))
    np.testing.assert_allclose(sum(parts), forward(model.with_weights(W), H), atol=1e-12)


def test_short_sign_bucket_fails_loudly():
    target = random_target(3, 1, 2, seed=0)
    stacked, rep, model, X = _setup(target, 30, 12, 1000)
    model = model.__class__(model.kind, model.W0, -np.ones(model.m), model.W)
    with pytest.raises(ConfigError, match="not enough neurons"):
        build_witness(target, stacked, rep, model, x_unlabeled=X)


def test_builder_input_validation():
    target = random_target(3, 1, 2, seed=0)
    stacked, rep, model, X = _setup(target, 30, 12, 1000)
    with pytest.raises(ConfigError):
        build_witness(target, stacked, rep, model, readout="projection")
    with pytest.raises(ConfigError):
        build_witness(target, stacked, rep, model, readout="exact", x_unlabeled=X)
    with pytest.raises(ConfigError):
        build_witness(target, stacked, rep, init_taylor_model(12, 7), x_unlabeled=X)


def test_projection_witness_is_accurate_at_small_scale():
    target = random_target(3, 1, 2, seed=4)
    stacked, rep, model, X = _setup(target, 300, 300, 8000)
    W, _ = build_witness(target, stacked, rep, model, x_unlabeled=X)
    assert witness_l2_error(model, W, rep, target, 4000) < 0.25


def test_concentration_helpers():
    assert concentration_bound(10, 100, 0.05) == pytest.approx(
        6 * math.sqrt(10 * math.log(300) * (1 + math.log(40)) / 100))
    W0 = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert indicator_concentration_stat(W0, np.array([[1.0, 0.0]])) == 0.0
    assert indicator_concentration_stat(W0[:1], np.array([[1.0, 0.0]])) == 1.0
    with pytest.raises(ConfigError):
        concentration_bound(10, 100, 1.0)


def test_opposite_sign_probability():
    assert opposite_sign_probability(1.0) == pytest.approx(0.0)
    assert opposite_sign_probability(0.0) == pytest.approx(0.5)
    rho = np.array([0.9, 0.99, 0.999])
    assert np.all(opposite_sign_probability(rho) <= np.sqrt(1 - rho**2))
    z = np.random.default_rng(0).standard_normal((2, 200_000))
    u, v = z[0], 0.6 * z[0] + 0.8 * z[1]
    assert np.mean(np.sign(u) != np.sign(v)) == pytest.approx(opposite_sign_probability(0.6), abs=0.005)
    with pytest.raises(ConfigError):
        opposite_sign_probability(1.5)
