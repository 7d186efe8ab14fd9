"""Seed streams, error types and small numeric helpers shared across modules."""

from __future__ import annotations

import zlib

import numpy as np


class QuadrepError(Exception):
    """Base class for library errors."""


class ConfigError(QuadrepError, ValueError):
    """Invalid user-supplied configuration or arguments."""


class NumericalError(QuadrepError, ArithmeticError):
    """A computation produced a non-finite value or a factorization failed."""


def stream(seed: int, *names: object) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``seed``.

    Names are hashed with CRC32 so the mapping is stable across processes
    and Python versions (unlike ``hash``).
    """
    if seed is None or int(seed) < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    key = tuple(zlib.crc32(str(n).encode()) for n in names)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Promote a single vector to a one-row batch; report whether it was single."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ConfigError(f"expected a vector or a 2-D batch, got shape {x.shape}")
    return x, False


def check_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite value encountered in {name}")


def double_factorial(n: int) -> int:
    """n!! with the conventions (-1)!! = 0!! = 1."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out
