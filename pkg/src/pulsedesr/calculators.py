"""Back-of-envelope estimates for dilute frozen solutions.

Concentrations are in mg/ml (numerically equal to kg/m^3), molar masses in
g/mol, distances in nm, times in ns.
"""

from __future__ import annotations

from dataclasses import dataclass

from .constants import AVOGADRO

__all__ = ["DIPOLAR_CONSTANT_MHZ_NM3", "DilutionSpec", "dipolar_coupling", "figure_of_merit",
           "mean_separation"]

#: Electron-electron dipolar coupling prefactor for g close to 2, MHz nm^3.
DIPOLAR_CONSTANT_MHZ_NM3 = 100.0


@dataclass(frozen=True)
class DilutionSpec:
    concentration: float  # mg/ml
    molar_mass: float  # g/mol

    def __post_init__(self):
        if not self.concentration > 0:
            raise ValueError("concentration must be positive")
        if not self.molar_mass > 0:
            raise ValueError("molar mass must be positive")


def mean_separation(spec: DilutionSpec) -> float:
    """Mean distance between solute molecules, ``(M / (c N_A))^(1/3)``, in nm.

    >>> round(mean_separation(DilutionSpec(0.2, 1880.0)), 1)
    25.0
    """
    # mg/ml = g/l = 1e-24 g/nm^3
    number_density = spec.concentration * 1e-24 * AVOGADRO / spec.molar_mass  # per nm^3
    return number_density ** (-1.0 / 3.0)


def dipolar_coupling(r: float) -> float:
    """Point-dipole coupling scale ``100 / r^3`` MHz for ``r`` in nm."""
    if not r > 0:
        raise ValueError("distance must be positive")
    return DIPOLAR_CONSTANT_MHZ_NM3 / r ** 3


def figure_of_merit(T2: float, t_op: float) -> float:
    """Number of operations within the coherence time, ``T2 / t_op``."""
    if not (T2 > 0 and t_op > 0):
        raise ValueError("T2 and t_op must be positive")
    return T2 / t_op
