import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadrep._common import ConfigError, stream
from quadrep.features import sphere_points
from quadrep.synth import (export_csv, label, make_split, make_target, monomial_l2_norm, random_target,
                           sample_inputs, sample_sphere, sphere_moment)


def test_sphere_moments_exact():
    assert sphere_moment(1, 7) == pytest.approx(1 / 7)
    assert sphere_moment(2, 3) == pytest.approx(1 / 5)
    assert sphere_moment(2, 12) == pytest.approx(3 / 168)


@pytest.mark.parametrize("p,d", [(1, 4), (2, 5), (3, 6), (4, 10)])
def test_sphere_moment_matches_monte_carlo(p, d):
    x = sphere_points(stream(p, "mom"), 400_000, d)[:, 0]
    vals = x ** (2 * p)
    assert abs(vals.mean() - sphere_moment(p, d)) < 4 * vals.std() / np.sqrt(len(vals))


@given(st.integers(2, 8), st.integers(1, 4), st.integers(0, 1000))
def test_normalized_terms_have_unit_norm(d, p, seed):
    beta = np.random.default_rng(seed).standard_normal(d) * 3
    t = make_target([(2.5, beta, p)], d)
    assert monomial_l2_norm(t.betas[0], p, d) == pytest.approx(1.0, rel=1e-10)
    assert t.alphas == (1.0,)
    assert t.original_beta_norms[0] == pytest.approx(np.linalg.norm(beta))


def test_target_evaluation_and_validation():
    t = make_target([(1.0, [1.0, 0.0], 2), (-0.5, [0.0, 1.0], 1)], 2, normalize=False)
    np.testing.assert_allclose(t(np.array([[2.0, 3.0]])), [4.0 - 1.5])
    assert t.r_star == 2 and t.p_max == 2 and t.d == 2
    for bad in ([(1.0, [1.0], 2)], [(1.0, [0.0, 0.0], 2)], [(1.0, [1.0, 0.0], 0)], []):
        with pytest.raises(ConfigError):
            make_target(bad, 2)


def test_random_target_alternates_signs():
    t = random_target(6, 3, 2, seed=1)
    assert t.alphas == (1.0, -1.0, 1.0)
    assert np.allclose(t.original_beta_norms, np.sqrt(6))
    with pytest.raises(ConfigError):
        random_target(6, 2, 2, alphas=[1.0])


def test_labels_clip_and_sign():
    t = make_target([(1.0, [1.0, 0.0], 1)], 2, normalize=False)
    X = np.array([[5.0, 0.0], [-0.5, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(label(t, X, "value"), [1.3, -0.5, 0.0])
    np.testing.assert_allclose(label(t, X, "sign"), [1.0, -1.0, 1.0])
    flipped = label(t, X, "sign", noise=1.0, rng=np.random.default_rng(0))
    np.testing.assert_allclose(flipped, [-1.0, 1.0, -1.0])
    noisy = label(t, np.tile(X, (100, 1)), "value", noise=5.0, rng=np.random.default_rng(0))
    assert np.max(np.abs(noisy)) <= 1.3
    with pytest.raises(ConfigError):
        label(t, X, "rank")


def test_split_prefix_property_and_determinism():
    t = random_target(5, 1, 2, seed=0)
    a, b = make_split(t, 50, 10, 20, seed=3), make_split(t, 80, 10, 20, seed=3)
    np.testing.assert_array_equal(a.X, b.X[:50])
    np.testing.assert_array_equal(a.X_test, b.X_test)
    np.testing.assert_array_equal(a.X_unlabeled, b.X_unlabeled)
    assert not np.array_equal(a.X, make_split(t, 50, 10, 20, seed=4).X)
    with pytest.raises(ConfigError):
        make_split(t, 0, 10, 20, seed=0)


def test_gaussian_inputs_variant():
    X = sample_inputs(50, 4000, np.random.default_rng(0), gaussian=True)
    assert np.mean(np.sum(X * X, axis=1)) == pytest.approx(1.0, abs=0.02)
    assert sample_sphere(3, 5, 0, "x").shape == (5, 3)


def test_export_csv_round_trip(tmp_path):
    X, y = np.array([[0.1, 0.2]]), np.array([0.3])
    path = tmp_path / "d.csv"
    export_csv(X, y, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x0,x1,y"
    assert [float(v) for v in lines[1].split(",")] == [0.1, 0.2, 0.3]
