"""Convex losses with bounded first and second derivatives.

Both losses satisfy ``|l'| <= 1``, ``0 <= l'' <= 1`` and ``l(0, y) <= 1`` on
their label domains (``y = +-1`` for logistic, ``|y| <= 1.3`` for log-cosh).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._common import ConfigError

LOGCOSH_LABEL_BOUND = 1.3


@dataclass(frozen=True)
class Loss:
    name: str

    def value(self, z, y):
        raise NotImplementedError

    def d1(self, z, y):
        raise NotImplementedError

    def d2(self, z, y):
        raise NotImplementedError


class Logistic(Loss):
    def __init__(self):
        super().__init__("logistic")

    def value(self, z, y):
        return np.logaddexp(0.0, -np.asarray(y) * np.asarray(z))

    def d1(self, z, y):
        y = np.asarray(y, dtype=float)
        return -y * expit(-y * np.asarray(z))

    def d2(self, z, y):
        s = expit(np.asarray(y) * np.asarray(z))
        return np.asarray(y, dtype=float) ** 2 * s * (1.0 - s)


class LogCosh(Loss):
    def __init__(self):
        super().__init__("logcosh")

    def value(self, z, y):
        u = np.abs(np.asarray(z) - np.asarray(y))
        # log cosh u = u + log1p(exp(-2u)) - log 2, stable for large u
        return u + np.log1p(np.exp(-2.0 * u)) - math.log(2.0)

    def d1(self, z, y):
        return np.tanh(np.asarray(z) - np.asarray(y))

    def d2(self, z, y):
        t = np.tanh(np.asarray(z) - np.asarray(y))
        return 1.0 - t * t


LOSSES = {"logistic": Logistic, "logcosh": LogCosh}


def get_loss(name: str) -> Loss:
    try:
        return LOSSES[name]()
    except KeyError:
        raise ConfigError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None
