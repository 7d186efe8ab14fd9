"""Wall-clock timings of the hot paths at the default benchmark size.

Usage: python benchmarks/timing.py [--D 300] [--m 1024] [--n 4000]
"""

import argparse
import time

import numpy as np

from quadrep.features import sample_feature_layer
from quadrep.landscape import min_hess_eig_estimate
from quadrep.losses import get_loss
from quadrep.synth import make_split, random_target
from quadrep.taylor import RegularizedRisk, Regularizer, init_taylor_model
from quadrep.whiten import estimate_covariance


def timed(label, fn, repeats=3):
    start = time.perf_counter()
    for _ in range(repeats):
        out = fn()
    print(f"{label:<22} {(time.perf_counter() - start) / repeats:8.3f} s")
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--d", type=int, default=10)
    parser.add_argument("--D", type=int, default=300)
    parser.add_argument("--m", type=int, default=1024)
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--n0", type=int, default=15000)
    args = parser.parse_args()

    data = make_split(random_target(args.d, 1, 4, 0), args.n, args.n0, 1, 0)
    layer = sample_feature_layer(args.d, args.D, True, 0)
    rep = timed("whitening", lambda: estimate_covariance(layer, data.X_unlabeled))
    H = rep.transform(data.X)
    model = init_taylor_model(args.m, args.D, "quadratic", 0)
    obj = RegularizedRisk(model, get_loss("logcosh"), H, data.y, Regularizer("norm24", 1e-5))
    W = 0.01 * np.random.default_rng(0).standard_normal(model.W.shape)
    timed("value + gradient", lambda: (obj.value(W), obj.grad(W)))
    timed("Hessian-vector", lambda: obj.hvp(W, W))
    timed("min eig (Lanczos)", lambda: min_hess_eig_estimate(obj, W), repeats=1)


if __name__ == "__main__":
    main()
