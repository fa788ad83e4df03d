"""Physical constants (current CODATA set, via :mod:`scipy.constants`) in toolkit units.

Energies are in GHz, fields in tesla, nuclear frequencies in MHz, times in ns.
"""

from scipy import constants as _c

#: Bohr magneton over Planck constant, GHz/T.
MU_B_OVER_H = _c.physical_constants["Bohr magneton in Hz/T"][0] * 1e-9

#: Nuclear gyromagnetic ratios gamma/2pi, MHz/T.
GAMMA_1H = _c.physical_constants["proton gyromag. ratio in MHz/T"][0]
# deuteron: mu_d / (I h) with I = 1
GAMMA_2H = _c.physical_constants["deuteron mag. mom."][0] / _c.h * 1e-6

GYROMAGNETIC_RATIOS = {"1H": GAMMA_1H, "2H": GAMMA_2H, "2D": GAMMA_2H}
NUCLEAR_SPINS = {"1H": 0.5, "2H": 1.0, "2D": 1.0}

AVOGADRO = _c.Avogadro

#: Proton frequency of 16.6 MHz puts the decay measurements at this field.
DEFAULT_ESEEM_FIELD_T = 0.38988

#: X-band default.
DEFAULT_MW_GHZ = 9.7
