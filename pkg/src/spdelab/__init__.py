"""Spectral simulation and pathwise solution of stochastic heat and wave
equations driven by spatially homogeneous Gaussian noise.

Modules:
    measures     spectral measures, Dalang and uniform-integrability checks
    kernels      heat/wave fundamental solutions, time factors, initial data
    noise        mode lattices and exact-in-law simulation of the linear field
    covariance   covariance oracles of the linear field
    solver       Picard solver for the drift equation with Gronwall certificate
    analysis     increment moments, Holder fits, GRR modulus, energy distance
    cli          configuration-driven experiments
"""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, CannotCapture, ConeViolation, ConfigError, Divergent,
                     DivergentMeasure, InsufficientSamples, InvalidInitialData, NoConvergence,
                     SpdeLabError, UnsupportedKernel, is_divergent)
from .fieldio import Field
from .kernels import InitialData, KernelSpec
from .measures import (AnisotropicFractional, FractionalLine, IsotropicFractional,
                       MeasureFamily, Riesz, Tabulated, dalang_integral, h1_check)
from .noise import ModeLattice, build_lattice, sample_linear_field
from .covariance import covariance, covariance_distance, weak_convergence
from .solver import (DriftSpec, EquationSpec, SpaceTimeGrid, gronwall_envelope,
                     picard_solve, solve_spde, truncate_drift)

__all__ = [
    "AnisotropicFractional", "BudgetExceeded", "CannotCapture", "ConeViolation",
    "ConfigError", "Divergent", "DivergentMeasure", "DriftSpec", "EquationSpec", "Field",
    "FractionalLine", "InitialData", "InsufficientSamples", "InvalidInitialData",
    "IsotropicFractional", "KernelSpec", "MeasureFamily", "ModeLattice", "NoConvergence",
    "Riesz", "SpaceTimeGrid", "SpdeLabError", "Tabulated", "UnsupportedKernel",
    "build_lattice", "covariance", "covariance_distance", "dalang_integral",
    "gronwall_envelope", "h1_check", "is_divergent", "picard_solve", "sample_linear_field",
    "solve_spde", "truncate_drift", "weak_convergence",
]
