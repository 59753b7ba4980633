"""Deterministic Landau-equation simulator with very soft potentials and regularity diagnostics."""

from __future__ import annotations

from .errors import ConfigError, DomainError, LandauKitError, NumericalError, WindowError
from .fields import DistributionField, ParabolicCylinder, Trajectory, VelocityGrid
from .kernel import KernelModel

__all__ = [
    "ConfigError",
    "DistributionField",
    "DomainError",
    "KernelModel",
    "LandauKitError",
    "NumericalError",
    "ParabolicCylinder",
    "Trajectory",
    "VelocityGrid",
    "WindowError",
]

__version__ = "0.1.0"
