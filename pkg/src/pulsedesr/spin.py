"""Zero-field-split spin Hamiltonians.

The electron spin is described by

    H = g (muB/h) B (n . S) + D Sz^2 + E (Sx^2 - Sy^2)

in GHz, with B in tesla along the unit vector ``n`` given in the molecular
frame. Matrices use the ``|S, m>`` basis with ``m`` descending from ``+S``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .constants import MU_B_OVER_H

__all__ = [
    "NuclearCoupling",
    "Orientation",
    "SpinOperators",
    "SpinSystem",
    "Transition",
    "build_hamiltonian",
    "eigensystem",
    "field_operators",
    "spin_operators",
    "transitions",
]


def _check_spin(S) -> float:
    S = float(S)
    if S <= 0 or not float(2 * S).is_integer():
        raise ValueError(f"spin quantum number must be a positive half-integer, got {S}")
    return S


@dataclass(frozen=True)
class NuclearCoupling:
    """Weakly coupled nucleus producing echo envelope modulation.

    ``gamma`` is gamma/2pi in MHz/T and ``k`` the modulation depth. The
    second-harmonic depth defaults to ``k**2 / 8`` unless overridden.
    """

    gamma: float
    spin_I: float = 0.5
    k: float = 0.0
    include_second_harmonic: bool = True
    second_harmonic_depth: float | None = None
    isotope: str | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"modulation depth k must lie in [0, 1], got {self.k}")
        if self.spin_I not in (0.5, 1.0):
            raise ValueError("spin_I must be 1/2 or 1")

    @classmethod
    def from_isotope(cls, isotope: str, k: float, second_harmonic: bool = True, **kw):
        from .constants import GYROMAGNETIC_RATIOS, NUCLEAR_SPINS

        try:
            gamma = GYROMAGNETIC_RATIOS[isotope]
        except KeyError:
            raise ValueError(f"unknown isotope {isotope!r}") from None
        return cls(gamma=gamma, spin_I=NUCLEAR_SPINS[isotope], k=k,
                   include_second_harmonic=second_harmonic, isotope=isotope, **kw)

    def to_dict(self) -> dict:
        d = {"k": self.k, "second_harmonic": self.include_second_harmonic}
        if self.isotope is not None:
            d["isotope"] = self.isotope
        else:
            d["gamma_MHz_T"] = self.gamma
            d["spin_I"] = self.spin_I
        if self.second_harmonic_depth is not None:
            d["second_harmonic_depth"] = self.second_harmonic_depth
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NuclearCoupling:
        d = dict(d)
        k = d.pop("k")
        sh = d.pop("second_harmonic", True)
        shd = d.pop("second_harmonic_depth", None)
        if "isotope" in d:
            iso = d.pop("isotope")
            if d:
                raise ValueError(f"unknown nucleus keys: {sorted(d)}")
            return cls.from_isotope(iso, k, sh, second_harmonic_depth=shd)
        gamma = d.pop("gamma_MHz_T")
        spin_I = d.pop("spin_I", 0.5)
        if d:
            raise ValueError(f"unknown nucleus keys: {sorted(d)}")
        return cls(gamma=gamma, spin_I=spin_I, k=k, include_second_harmonic=sh,
                   second_harmonic_depth=shd)


@dataclass(frozen=True)
class SpinSystem:
    """Effective electron spin with isotropic g and zero-field splitting (GHz)."""

    S: float
    g: float = 2.0
    D: float = 0.0
    E: float = 0.0
    nuclei: tuple[NuclearCoupling, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "S", _check_spin(self.S))
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if abs(self.E) > abs(self.D) / 3 + 1e-12:
            raise ValueError(f"|E| = {abs(self.E)} exceeds |D|/3 = {abs(self.D) / 3}")

    @property
    def dim(self) -> int:
        return int(round(2 * self.S + 1))

    def replace(self, **changes) -> SpinSystem:
        d = {"S": self.S, "g": self.g, "D": self.D, "E": self.E, "nuclei": self.nuclei}
        d.update(changes)
        return SpinSystem(**d)

    def to_dict(self) -> dict:
        S = int(self.S) if self.S.is_integer() else self.S
        return {"S": S, "g": self.g, "D_GHz": self.D, "E_GHz": self.E,
                "nuclei": [n.to_dict() for n in self.nuclei]}

    @classmethod
    def from_dict(cls, d: dict) -> SpinSystem:
        unknown = set(d) - {"S", "g", "D_GHz", "E_GHz", "nuclei"}
        if unknown:
            raise ValueError(f"unknown spin-system keys: {sorted(unknown)}")
        return cls(S=d["S"], g=d.get("g", 2.0), D=d.get("D_GHz", 0.0), E=d.get("E_GHz", 0.0),
                   nuclei=tuple(NuclearCoupling.from_dict(n) for n in d.get("nuclei", [])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> SpinSystem:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Orientation:
    """Field direction in the molecular frame; theta in [0, pi], phi in [0, 2pi)."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(self.phi) % (2 * np.pi))

    @property
    def vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    @property
    def perpendicular(self) -> np.ndarray:
        """Lab x axis (perpendicular to the field) expressed in the molecular frame."""
        ct = np.cos(self.theta)
        return np.array([ct * np.cos(self.phi), ct * np.sin(self.phi), -np.sin(self.theta)])


class SpinOperators(NamedTuple):
    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray


class Transition(NamedTuple):
    i: int
    j: int
    frequency: float
    intensity: float


@lru_cache(maxsize=32)
def _operators(two_s: int) -> SpinOperators:
    S = two_s / 2
    m = S - np.arange(two_s + 1)
    # S+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>; row index of m+1 is one above m
    plus = np.diag(np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    minus = plus.conj().T
    ops = SpinOperators((plus + minus) / 2, (plus - minus) / 2j, np.diag(m).astype(complex))
    for op in ops:
        op.setflags(write=False)
    return ops


def spin_operators(S) -> SpinOperators:
    """Angular-momentum matrices Sx, Sy, Sz for spin ``S`` (m descending)."""
    return _operators(int(round(2 * _check_spin(S))))


def _direction(direction) -> np.ndarray:
    if isinstance(direction, Orientation):
        return direction.vector
    n = np.asarray(direction, dtype=float)
    return n / np.linalg.norm(n)


def zfs_matrix(sys: SpinSystem) -> np.ndarray:
    Sx, Sy, Sz = spin_operators(sys.S)
    return sys.D * Sz @ Sz + sys.E * (Sx @ Sx - Sy @ Sy)


def build_hamiltonian(sys: SpinSystem, B: float, direction) -> np.ndarray:
    """Spin Hamiltonian in GHz for field ``B`` (T) along ``direction``.

    ``direction`` is an :class:`Orientation` or a 3-vector in the molecular frame.
    """
    if B < 0:
        raise ValueError("field magnitude must be non-negative")
    Sx, Sy, Sz = spin_operators(sys.S)
    n = _direction(direction)
    zeeman = sys.g * MU_B_OVER_H * B * (n[0] * Sx + n[1] * Sy + n[2] * Sz)
    H = zeeman + zfs_matrix(sys)
    return (H + H.conj().T) / 2


def field_operators(sys: SpinSystem, direction):
    """Return ``(H0, Z, Sperp)`` with ``H(B) = H0 + B Z`` and the lab-x operator."""
    Sx, Sy, Sz = spin_operators(sys.S)
    o = direction if isinstance(direction, Orientation) else None
    n = _direction(direction)
    if o is None:
        # any unit vector perpendicular to n
        ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        p = np.cross(n, ref)
        p /= np.linalg.norm(p)
    else:
        p = o.perpendicular
    Z = sys.g * MU_B_OVER_H * (n[0] * Sx + n[1] * Sy + n[2] * Sz)
    Sp = p[0] * Sx + p[1] * Sy + p[2] * Sz
    return zfs_matrix(sys), Z, Sp


def eigensystem(H, rtol: float = 1e-10):
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > rtol * scale:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh((H + H.conj().T) / 2)


def transitions(eigvals, eigvecs, op) -> list[Transition]:
    """All pairs ``i < j`` with frequency ``E_j - E_i`` and intensity ``|<i|op|j>|^2``."""
    M = eigvecs.conj().T @ op @ eigvecs
    out = []
    n = len(eigvals)
    for i in range(n):
        for j in range(i + 1, n):
            out.append(Transition(i, j, float(eigvals[j] - eigvals[i]), float(abs(M[i, j]) ** 2)))
    return out
