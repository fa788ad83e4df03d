"""Reproducible additive Gaussian noise.

Draws come from a counter-based Philox generator whose key is the seed, so
a given ``(seed, stream)`` pair yields the same samples on every platform
and in every process, independent of anything else drawn before.
"""

from __future__ import annotations

import dataclasses

import numpy as np

__all__ = ["add_noise", "noise_generator"]

_U64 = (1 << 64) - 1


def noise_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``seed`` (low 64 bits) and ``stream`` (high 64 bits)."""
    seed, stream = int(seed), int(stream)
    if not (0 <= seed <= _U64 and 0 <= stream <= _U64):
        raise ValueError("seed and stream must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=seed | (stream << 64)))


def add_noise(data, sigma: float, seed: int | None, stream: int = 0):
    """Return ``data`` plus N(0, sigma^2) noise on its amplitudes.

    ``data`` is an array, a :class:`~pulsedesr.pulses.Trace` or a
    :class:`~pulsedesr.powder.Spectrum`; containers are copied, never
    modified. A positive ``sigma`` requires an explicit seed.
    """
    if sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    if sigma > 0 and seed is None:
        raise ValueError("a seed is required when noise sigma > 0")
    amp = np.asarray(data.amplitude if hasattr(data, "amplitude") else data, dtype=float)
    if sigma > 0:
        amp = amp + noise_generator(seed, stream).normal(0.0, sigma, size=amp.shape)
    else:
        amp = amp.copy()
    if hasattr(data, "amplitude"):
        meta = dict(data.meta)
        meta.update({"noise_sigma": sigma, "noise_seed": seed})
        return dataclasses.replace(data, amplitude=amp, meta=meta)
    return amp
