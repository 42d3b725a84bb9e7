"""Staged inverse cascades for the 3D Navier-Stokes equations on the torus.

Modules
-------
geometry
    Exact direction systems, the matrix decomposition and Mikado profiles.
spectral
    Periodic fields, Fourier operators, Littlewood-Paley norms, snapshots.
construction
    Scale ladders, the coefficient induction and the principal flow.
solver
    Integrating-factor Runge-Kutta integrator and cascade diagnostics.
cli
    ``nscascade`` command line.
"""
from .config import ExperimentConfig, load_config, reference_config
from .construction import (
    ConfigError,
    ResolutionError,
    ScaleTable,
    TargetSpec,
    build_coefficients,
    build_scales,
)
from .spectral import PeriodicField

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PeriodicField",
    "ResolutionError",
    "ScaleTable",
    "TargetSpec",
    "build_coefficients",
    "build_scales",
    "load_config",
    "reference_config",
]
