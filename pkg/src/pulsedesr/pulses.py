"""Two-level pulse dynamics for Hahn-echo and inversion-recovery sequences.

Conventions: times in ns, frequencies in MHz, Bloch vectors with thermal
equilibrium at ``(0, 0, +1)``. A pulse of phase 0 rotates about +x, so a
pi/2 pulse sends the magnetization to -y and the Hahn echo refocuses along
+y; the detected signal is the ensemble mean of ``M_y``.

Echo decays use ``exp(-2 tau / T2)``: the echo forms after a total
transverse evolution of ``2 tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.stats import norm

from .constants import MU_B_OVER_H

__all__ = [
    "Delay",
    "Pulse",
    "PulseSequence",
    "RelaxationParams",
    "Trace",
    "echo_amplitude",
    "excitation_profile",
    "free_evolution",
    "hahn_decay_curve",
    "hahn_sequence",
    "inversion_recovery_curve",
    "inversion_recovery_sequence",
    "pulse_propagator",
    "pulse_rotation",
    "run_sequence",
]

_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

TRACE_KINDS = ("time_ns", "delay_ns", "recovery_ns", "field_T")


@dataclass(frozen=True)
class Pulse:
    """Rectangular microwave pulse.

    ``rabi_frequency`` (MHz) follows from the nominal angle and duration; if
    given explicitly it must agree with them.
    """

    duration: float
    nominal_angle: float = np.pi / 2
    phase: float = 0.0
    rabi_frequency: float | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        derived = self.nominal_angle / (2 * np.pi * self.duration * 1e-3)
        if self.rabi_frequency is None:
            object.__setattr__(self, "rabi_frequency", derived)
        elif not np.isclose(self.rabi_frequency, derived, rtol=1e-9):
            raise ValueError(
                f"rabi_frequency {self.rabi_frequency} MHz inconsistent with "
                f"angle/duration ({derived} MHz)")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("delay must be non-negative")


Element = Union[Pulse, Delay]


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple[Element, ...]
    detection: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not any(isinstance(e, Pulse) for e in self.elements):
            raise ValueError("a pulse sequence needs at least one pulse")
        if self.detection is not None:
            center, width = self.detection
            if width < 0 or center - width / 2 < 0 or center + width / 2 > self.span + 1e-9:
                raise ValueError("detection window lies outside the sequence")

    @property
    def span(self) -> float:
        return float(sum(e.duration for e in self.elements))


@dataclass(frozen=True)
class RelaxationParams:
    T1: float = np.inf
    T2: float = np.inf

    def __post_init__(self):
        if not self.T2 > 0:
            raise ValueError("T2 must be positive")
        if not self.T1 >= self.T2 / 2:
            raise ValueError("unphysical relaxation: T1 must be at least T2/2")


@dataclass(frozen=True)
class Trace:
    axis: np.ndarray
    amplitude: np.ndarray
    kind: str = "time_ns"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        amp = np.asarray(self.amplitude, dtype=float)
        if axis.shape != amp.shape or axis.ndim != 1:
            raise ValueError("axis and amplitude must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(axis)) and np.all(np.isfinite(amp))):
            raise ValueError("trace values must be finite")
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"unknown trace kind {self.kind!r}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "amplitude", amp)

    def __len__(self):
        return len(self.axis)


def hahn_sequence(tau: float, p90: float = 16.0, p180: float | None = None,
                  detection_width: float = 0.0) -> PulseSequence:
    """pi/2 - tau - pi - tau, detected at the refocusing point."""
    p180 = 2 * p90 if p180 is None else p180
    elements = (Pulse(p90, np.pi / 2), Delay(tau), Pulse(p180, np.pi), Delay(tau + detection_width / 2))
    center = p90 + tau + p180 + tau
    return PulseSequence(elements, (center, detection_width))


def inversion_recovery_sequence(T: float, tau: float, p90: float = 16.0,
                                p180: float | None = None,
                                detection_width: float = 0.0) -> PulseSequence:
    """pi - T - pi/2 - tau - pi - tau, detected at the refocusing point."""
    p180 = 2 * p90 if p180 is None else p180
    elements = (Pulse(p180, np.pi), Delay(T), Pulse(p90, np.pi / 2), Delay(tau), Pulse(p180, np.pi),
                Delay(tau + detection_width / 2))
    center = p180 + T + p90 + tau + p180 + tau
    return PulseSequence(elements, (center, detection_width))


def _generator(pulse: Pulse, detuning):
    """Angular-frequency vector (rad/ns) of the rotating-frame field."""
    w1 = 2 * np.pi * pulse.rabi_frequency * 1e-3
    d = 2 * np.pi * np.asarray(detuning, dtype=float) * 1e-3
    return w1 * np.cos(pulse.phase), w1 * np.sin(pulse.phase), d


def pulse_propagator(pulse: Pulse, detuning: float = 0.0, S: float = 0.5) -> np.ndarray:
    """Rotating-frame propagator ``exp(-i (Delta Sz + w1 (cos p Sx + sin p Sy)) t)``.

    For ``S = 1/2`` this is the closed-form SU(2) rotation; larger ``S`` uses
    the full (2S+1)-dimensional spin matrices.
    """
    wx, wy, wz = _generator(pulse, detuning)
    t = pulse.duration
    if S == 0.5:
        w = np.sqrt(wx * wx + wy * wy + wz * wz)
        if w == 0:
            return np.eye(2, dtype=complex)
        n = (wx / w) * _SIGMA_X + (wy / w) * _SIGMA_Y + (wz / w) * _SIGMA_Z
        return np.cos(w * t / 2) * np.eye(2) - 1j * np.sin(w * t / 2) * n
    from .spin import spin_operators

    Sx, Sy, Sz = spin_operators(S)
    G = wx * Sx + wy * Sy + wz * Sz
    lam, V = np.linalg.eigh(G)
    return (V * np.exp(-1j * lam * t)) @ V.conj().T


def pulse_rotation(pulse: Pulse, detuning=0.0, duration: float | None = None,
                   rabi_scale=1.0) -> np.ndarray:
    """SO(3) Bloch-vector rotation(s) for a pulse, shape ``(..., 3, 3)``.

    Equivalent to conjugation by :func:`pulse_propagator`; vectorized over
    ``detuning`` and ``rabi_scale``.
    """
    t = pulse.duration if duration is None else duration
    wx, wy, wz = _generator(pulse, detuning)
    wx, wy, wz = np.broadcast_arrays(wx * rabi_scale, wy * rabi_scale, wz)
    w = np.sqrt(wx ** 2 + wy ** 2 + wz ** 2)
    safe = np.where(w > 0, w, 1.0)
    k = np.stack([wx / safe, wy / safe, wz / safe], axis=-1)
    k = np.where((w > 0)[..., None], k, np.array([0.0, 0.0, 1.0]))
    a = w * t
    c, s = np.cos(a)[..., None, None], np.sin(a)[..., None, None]
    K = np.zeros(k.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -k[..., 2], k[..., 1]
    K[..., 1, 0], K[..., 1, 2] = k[..., 2], -k[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -k[..., 1], k[..., 0]
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def _ideal_rotation(pulse: Pulse) -> np.ndarray:
    ax = np.array([np.cos(pulse.phase), np.sin(pulse.phase), 0.0])
    K = np.array([[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]])
    a = pulse.nominal_angle
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * K @ K


def free_evolution(state, delay: float, detuning=0.0,
                   relax: RelaxationParams = RelaxationParams()) -> np.ndarray:
    """Precess about z at ``detuning`` (MHz) for ``delay`` ns with Bloch damping.

    ``state`` may be a single Bloch vector or an ``(n, 3)`` ensemble with a
    matching array of detunings.
    """
    state = np.asarray(state, dtype=float)
    if np.any(np.linalg.norm(state, axis=-1) > 1 + 1e-9):
        raise ValueError("Bloch vector norm exceeds 1")
    a = 2 * np.pi * np.asarray(detuning, dtype=float) * 1e-3 * delay
    c, s = np.cos(a), np.sin(a)
    e2 = np.exp(-delay / relax.T2)
    e1 = np.exp(-delay / relax.T1)
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    return np.stack([e2 * (c * x - s * y), e2 * (s * x + c * y), 1.0 + (z - 1.0) * e1], axis=-1)


class _Timeline:
    """Exact piecewise evolution of a detuning ensemble through a sequence."""

    def __init__(self, seq, detunings, relax, hard_pulses, rabi_scale):
        self.detunings = detunings
        self.relax = relax
        self.rabi_scale = rabi_scale
        self.hard = hard_pulses
        self.segments = []
        state = np.tile([0.0, 0.0, 1.0], (len(detunings), 1))
        t = 0.0
        for el in seq.elements:
            dur = 0.0 if (hard_pulses and isinstance(el, Pulse)) else el.duration
            self.segments.append((t, dur, el, state))
            state = self._advance(el, state, dur)
            t += dur
        self.end_state = state
        self.span = t

    def _advance(self, el, state, dt):
        if isinstance(el, Delay):
            return free_evolution(state, dt, self.detunings, self.relax)
        if self.hard:
            return state @ _ideal_rotation(el).T
        R = pulse_rotation(el, self.detunings, dt, self.rabi_scale)
        return np.einsum("nij,nj->ni", R, state)

    def state_at(self, t: float) -> np.ndarray:
        for start, dur, el, state in reversed(self.segments):
            if t >= start - 1e-12:
                return self._advance(el, state, min(max(t - start, 0.0), dur))
        return self.segments[0][3]

    def signal(self, times) -> np.ndarray:
        return np.array([self.state_at(t)[:, 1].mean() for t in np.atleast_1d(times)])


def _ensemble(sigma_MHz: float, n: int, center: float = 0.0) -> np.ndarray:
    if n < 1:
        raise ValueError("ensemble needs at least one spin")
    if n == 1 or sigma_MHz == 0:
        return np.full(n, float(center))
    # deterministic Gaussian quantiles
    return center + sigma_MHz * norm.ppf((np.arange(n) + 0.5) / n)


def _sample_times(seq, hard, factor):
    times = [0.0]
    t = 0.0
    for el in seq.elements:
        if isinstance(el, Pulse):
            if hard:
                continue
            steps = 64 * factor
        else:
            steps = 256 * factor
        if el.duration > 0:
            times.extend(t + el.duration * np.arange(1, steps + 1) / steps)
        t += el.duration
    return np.unique(np.array(times))


def echo_amplitude(timeline: _Timeline, detection, factor: int = 1, tol: float = 1e-6,
                   max_halvings: int = 8) -> float:
    """Window-averaged signal, refining the sampling until it changes by < ``tol``."""
    center, width = detection
    if width == 0:
        return float(timeline.signal(center)[0])
    prev = None
    for _ in range(max_halvings):
        n = 32 * factor + 1
        ts = np.linspace(center - width / 2, center + width / 2, n)
        val = float(np.trapezoid(timeline.signal(ts), ts) / width)
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        factor *= 2
    return prev


def run_sequence(seq: PulseSequence, sigma_MHz: float = 0.0, n_spins: int = 1,
                 relax: RelaxationParams = RelaxationParams(), *, hard_pulses: bool = False,
                 center_MHz: float = 0.0, rabi_scale=1.0, step_factor: int = 1) -> Trace:
    """Ensemble-averaged in-phase transverse magnetization through ``seq``.

    Detunings are deterministic quantiles of a Gaussian of width ``sigma_MHz``.
    With ``hard_pulses`` every pulse is an instantaneous ideal rotation by its
    nominal angle. Relaxation acts only during delays. The detected echo
    (window average, or point value for zero width) is stored in
    ``meta["echo"]``; ``meta["fid"]`` holds the signal right after the first pulse.
    """
    det = _ensemble(sigma_MHz, n_spins, center_MHz)
    tl = _Timeline(seq, det, relax, hard_pulses, rabi_scale)
    times = _sample_times(seq, hard_pulses, step_factor)
    times = times[times <= tl.span + 1e-9]
    signal = tl.signal(times)
    meta = {"n_spins": n_spins, "sigma_MHz": sigma_MHz, "hard_pulses": hard_pulses}
    first = next(i for i, e in enumerate(seq.elements) if isinstance(e, Pulse))
    t0, dur0, _, _ = tl.segments[first]
    meta["fid"] = float(tl.signal(t0 + dur0)[0])
    if seq.detection is not None:
        center, width = seq.detection
        if hard_pulses:
            center -= sum(e.duration for e in seq.elements if isinstance(e, Pulse))
        meta["echo_time"] = center
        meta["echo"] = echo_amplitude(tl, (center, width))
    return Trace(times, signal, "time_ns", meta)


def hahn_decay_curve(tau, relax: RelaxationParams, eseem_model=None, amplitude: float = 1.0,
                     detection_window_ns: float = 0.0) -> Trace:
    """Two-pulse echo decay ``A exp(-2 tau/T2) V(tau)``."""
    from .eseem import two_pulse_modulation, windowed_modulation

    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(np.diff(tau) < 0):
        raise ValueError("tau values must be non-negative and ascending")
    amp = amplitude * np.exp(-2 * tau / relax.T2)
    if eseem_model is not None:
        if detection_window_ns > 0:
            amp = amp * windowed_modulation(eseem_model, tau, detection_window_ns)
        else:
            amp = amp * two_pulse_modulation(eseem_model, tau)
    return Trace(tau, amp, "delay_ns", {"T2_ns": relax.T2})


def inversion_recovery_curve(T, relax: RelaxationParams, tau_fixed: float,
                             efficiency: float = 1.0, M_inf: float = 1.0) -> Trace:
    """``M_inf (1 - 2 f exp(-T/T1))`` scaled by the echo factor ``exp(-2 tau/T2)``."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0) or np.any(np.diff(T) < 0):
        raise ValueError("recovery delays must be non-negative and ascending")
    if not 0 < efficiency <= 1:
        raise ValueError("inversion efficiency must lie in (0, 1]")
    echo = np.exp(-2 * tau_fixed / relax.T2)
    amp = M_inf * (1 - 2 * efficiency * np.exp(-T / relax.T1)) * echo
    return Trace(T, amp, "recovery_ns", {"T1_ns": relax.T1, "tau_ns": tau_fixed})


def excitation_profile(pulse: Pulse, g: float = 2.0, component: str = "in_phase",
                       points: int = 20001, return_profile: bool = False):
    """Full width at half maximum (mT) of the post-pulse transverse response.

    ``component="in_phase"`` uses the phase-detected component along the
    on-resonance magnetization direction; ``"magnitude"`` uses ``|M_perp|``.
    """
    span = 12.0 / (pulse.duration * 1e-3)  # MHz, many excitation bandwidths
    det = np.linspace(-span, span, points)
    R = pulse_rotation(pulse, det)
    m = R[:, :, 2]  # image of +z
    ref = pulse_rotation(pulse, 0.0)[:, 2]
    ref_perp = np.array([ref[0], ref[1], 0.0])
    nrm = np.linalg.norm(ref_perp)
    if component == "in_phase":
        if nrm == 0:
            raise ValueError("pulse leaves no on-resonance transverse magnetization")
        prof = np.abs(m[:, :2] @ (ref_perp[:2] / nrm))
    elif component == "magnitude":
        prof = np.hypot(m[:, 0], m[:, 1])
    else:
        raise ValueError(f"unknown component {component!r}")
    prof = prof / prof[points // 2]
    fwhm_MHz = _central_fwhm(det, prof)
    fwhm_mT = fwhm_MHz / (g * MU_B_OVER_H * 1e3) * 1e3
    if return_profile:
        return fwhm_mT, det, prof
    return fwhm_mT


def _central_fwhm(x, y):
    c = len(x) // 2
    above = y >= 0.5
    right = c + np.argmin(above[c:])
    left = c - np.argmin(above[c::-1])

    def cross(i0, i1):
        return x[i0] + (0.5 - y[i0]) * (x[i1] - x[i0]) / (y[i1] - y[i0])

    return cross(right - 1, right) - cross(left + 1, left)
