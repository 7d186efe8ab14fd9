"""Bit-exact save/load of layers, whitening maps and model checkpoints.

Files are ``.npz`` archives: raw float64 arrays plus a JSON header stored as a
0-d string array under ``header``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._common import ConfigError
from .features import FeatureLayer
from .taylor import TaylorModel
from .whiten import WhitenedRep

FORMAT_VERSION = 1


def _save(path, kind: str, header: dict, **arrays) -> None:
    head = {"format": FORMAT_VERSION, "kind": kind, **header}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(head, sort_keys=True)), **arrays)


def _load(path, kind: str):
    with np.load(Path(path), allow_pickle=False) as z:
        head = json.loads(str(z["header"]))
        if head.get("kind") != kind:
            raise ConfigError(f"{path} holds a {head.get('kind')!r}, expected {kind!r}")
        arrays = {k: z[k] for k in z.files if k != "header"}
    return head, arrays


def _layer_header(layer: FeatureLayer) -> dict:
    return {"d": layer.d, "D": layer.D, "use_bias": layer.use_bias, "seed": layer.seed}


def _layer_arrays(layer: FeatureLayer) -> dict:
    out = {"V": layer.V}
    if layer.b is not None:
        out["b"] = layer.b
    return out


def _layer_from(head, arrays) -> FeatureLayer:
    b = arrays["b"] if head["use_bias"] else None
    return FeatureLayer(arrays["V"], b, int(head["seed"]))


def save_layer(layer: FeatureLayer, path) -> None:
    _save(path, "layer", _layer_header(layer), **_layer_arrays(layer))


def load_layer(path) -> FeatureLayer:
    return _layer_from(*_load(path, "layer"))


def save_rep(rep: WhitenedRep, path) -> None:
    head = {**_layer_header(rep.layer), "eig_floor": rep.eig_floor, "n_floored": rep.n_floored,
            "n0": rep.n0, "min_eig": rep.min_eig, "max_eig": rep.max_eig}
    _save(path, "whitened_rep", head, sigma_hat=rep.sigma_hat, inv_sqrt=rep.inv_sqrt, sqrt=rep.sqrt,
          **_layer_arrays(rep.layer))


def load_rep(path) -> WhitenedRep:
    head, arrays = _load(path, "whitened_rep")
    return WhitenedRep(_layer_from(head, arrays), arrays["sigma_hat"], arrays["inv_sqrt"], arrays["sqrt"],
                       float(head["eig_floor"]), int(head["n_floored"]), int(head["n0"]),
                       float(head["min_eig"]), float(head["max_eig"]))


def save_model(model: TaylorModel, path, seeds: dict | None = None) -> None:
    head = {"kind_model": model.kind, "m": model.m, "D": model.D, "seeds": seeds or {}}
    _save(path, "taylor_model", head, W0=model.W0, a=model.a, W=model.W)


def load_model(path) -> tuple[TaylorModel, dict]:
    head, arrays = _load(path, "taylor_model")
    return TaylorModel(head["kind_model"], arrays["W0"], arrays["a"], arrays["W"]), head["seeds"]
