"""Pulsed ESR simulation and relaxation analysis for zero-field-split spins."""

from .calculators import DilutionSpec, dipolar_coupling, figure_of_merit, mean_separation
from .eseem import EseemModel, gamma_ratio, larmor_frequency, modulated_decay, two_pulse_modulation
from .fitting import FitModel, FitResult, fit, fit_gaussian_line, fit_inversion_recovery, fit_zfs_spectrum
from .noise import add_noise, noise_generator
from .powder import OrientationGrid, Spectrum, echo_detected_spectrum, make_grid, resonance_fields
from .pulses import (
    Delay,
    Pulse,
    PulseSequence,
    RelaxationParams,
    Trace,
    excitation_profile,
    free_evolution,
    hahn_decay_curve,
    inversion_recovery_curve,
    pulse_propagator,
    run_sequence,
)
from .spin import (
    NuclearCoupling,
    Orientation,
    SpinSystem,
    build_hamiltonian,
    eigensystem,
    spin_operators,
    transitions,
)

__all__ = [
    "Delay",
    "DilutionSpec",
    "EseemModel",
    "FitModel",
    "FitResult",
    "NuclearCoupling",
    "Orientation",
    "OrientationGrid",
    "Pulse",
    "PulseSequence",
    "RelaxationParams",
    "Spectrum",
    "SpinSystem",
    "Trace",
    "add_noise",
    "build_hamiltonian",
    "dipolar_coupling",
    "echo_detected_spectrum",
    "eigensystem",
    "excitation_profile",
    "figure_of_merit",
    "fit",
    "fit_gaussian_line",
    "fit_inversion_recovery",
    "fit_zfs_spectrum",
    "free_evolution",
    "gamma_ratio",
    "hahn_decay_curve",
    "inversion_recovery_curve",
    "larmor_frequency",
    "make_grid",
    "mean_separation",
    "modulated_decay",
    "noise_generator",
    "pulse_propagator",
    "resonance_fields",
    "run_sequence",
    "spin_operators",
    "transitions",
    "two_pulse_modulation",
]

__version__ = "0.1.0"
