"""Two-pulse echo envelope modulation from weakly coupled nuclei.

Each nucleus contributes harmonics of its Zeeman frequency with a
phenomenological depth ``k``:

    V_n(tau) = 1 - k/2 (1 - cos w tau) - k^2/8 (1 - cos 2 w tau)

and independent nuclei multiply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_ESEEM_FIELD_T, GAMMA_1H, GAMMA_2H
from .spin import NuclearCoupling

__all__ = [
    "EseemModel",
    "NuclearCoupling",
    "gamma_ratio",
    "larmor_frequency",
    "modulated_decay",
    "two_pulse_modulation",
    "windowed_modulation",
]


@dataclass(frozen=True)
class EseemModel:
    nuclei: tuple[NuclearCoupling, ...] = ()
    B: float = DEFAULT_ESEEM_FIELD_T

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if not self.B > 0:
            raise ValueError("field must be positive")

    def to_dict(self) -> dict:
        return {"nuclei": [n.to_dict() for n in self.nuclei], "B_T": self.B}

    @classmethod
    def from_dict(cls, d: dict) -> EseemModel:
        unknown = set(d) - {"nuclei", "B_T"}
        if unknown:
            raise ValueError(f"unknown eseem keys: {sorted(unknown)}")
        return cls(tuple(NuclearCoupling.from_dict(n) for n in d.get("nuclei", [])),
                   d.get("B_T", DEFAULT_ESEEM_FIELD_T))

    def frequencies(self) -> list[float]:
        return [larmor_frequency(n.gamma, self.B) for n in self.nuclei]


def larmor_frequency(gamma: float, B: float) -> float:
    """Nuclear Zeeman frequency in MHz for ``gamma`` in MHz/T."""
    if B < 0:
        raise ValueError("field must be non-negative")
    return gamma * B


def gamma_ratio() -> float:
    """gamma(1H) / gamma(2H)."""
    return GAMMA_1H / GAMMA_2H


def _nucleus_modulation(nuc: NuclearCoupling, nu_MHz: float, tau) -> np.ndarray:
    wt = 2 * np.pi * nu_MHz * 1e-3 * tau
    v = 1.0 - nuc.k / 2 * (1.0 - np.cos(wt))
    if nuc.include_second_harmonic:
        h2 = nuc.k ** 2 / 8 if nuc.second_harmonic_depth is None else nuc.second_harmonic_depth
        v = v - h2 * (1.0 - np.cos(2 * wt))
    return v


def two_pulse_modulation(model: EseemModel, tau):
    """Modulation ``V(tau)`` (tau in ns) as the product over nuclei."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    v = np.ones_like(tau)
    for nuc in model.nuclei:
        v = v * _nucleus_modulation(nuc, larmor_frequency(nuc.gamma, model.B), tau)
    return v


def windowed_modulation(model: EseemModel, tau, window_ns: float, samples: int = 257):
    """Modulation seen by an echo integrated over ``window_ns`` around its center.

    A point of the echo displaced by ``u`` from the center carries the
    modulation of delay ``tau + u/2``; integrating over the window averages
    the nuclear harmonics away once the window spans several periods.
    """
    tau = np.asarray(tau, dtype=float)
    if window_ns <= 0:
        return two_pulse_modulation(model, tau)
    u = np.linspace(-window_ns / 2, window_ns / 2, samples)
    shifted = np.clip(tau[..., None] + u / 2, 0.0, None)
    return np.trapezoid(two_pulse_modulation(model, shifted), u, axis=-1) / window_ns


def modulated_decay(T2: float, model: EseemModel, tau, amplitude: float = 1.0):
    """``A exp(-2 tau/T2) V(tau)`` as a delay trace."""
    from .pulses import Trace

    tau = np.asarray(tau, dtype=float)
    if np.any(np.diff(tau) < 0):
        raise ValueError("tau values must be ascending")
    amp = amplitude * np.exp(-2 * tau / T2) * two_pulse_modulation(model, tau)
    return Trace(tau, amp, "delay_ns", {"T2_ns": T2})


def deuterium_model(k: float, second_harmonic: bool = False, B: float = DEFAULT_ESEEM_FIELD_T):
    return EseemModel((NuclearCoupling.from_isotope("2H", k, second_harmonic),), B)


def proton_model(k: float, second_harmonic: bool = True, B: float = DEFAULT_ESEEM_FIELD_T):
    return EseemModel((NuclearCoupling.from_isotope("1H", k, second_harmonic),), B)
