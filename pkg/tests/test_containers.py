import numpy as np
import pytest

from quadrep._common import ConfigError, stream
from quadrep.containers import load_layer, load_model, load_rep, save_layer, save_model, save_rep
from quadrep.features import sample_feature_layer, sphere_points
from quadrep.taylor import init_taylor_model
from quadrep.whiten import estimate_covariance


@pytest.mark.parametrize("use_bias", [True, False])
def test_layer_round_trip_is_bit_exact(tmp_path, use_bias):
    layer = sample_feature_layer(4, 9, use_bias=use_bias, seed=7)
    save_layer(layer, tmp_path / "l.npz")
    back = load_layer(tmp_path / "l.npz")
    assert back.V.tobytes() == layer.V.tobytes() and back.seed == 7
    assert (back.b is None) == (not use_bias)


def test_rep_and_model_round_trip(tmp_path):
    layer = sample_feature_layer(8, 6, seed=1)
    rep = estimate_covariance(layer, sphere_points(stream(1, "u"), 500, 8))
    save_rep(rep, tmp_path / "r.npz")
    back = load_rep(tmp_path / "r.npz")
    assert back.inv_sqrt.tobytes() == rep.inv_sqrt.tobytes() and back.n0 == 500
    model = init_taylor_model(5, 6, seed=2).with_weights(np.arange(30.0).reshape(5, 6))
    save_model(model, tmp_path / "m.npz", seeds={"init": 2})
    m2, seeds = load_model(tmp_path / "m.npz")
    assert m2.W.tobytes() == model.W.tobytes() and seeds == {"init": 2}
    with pytest.raises(ConfigError):
        load_layer(tmp_path / "m.npz")
