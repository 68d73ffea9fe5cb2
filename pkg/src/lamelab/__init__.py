"""Numerical laboratory for elastic boundary rigidity of isotropic media."""
from __future__ import annotations

from .domain import Domain
from .elasticity import LameField, PositivityError, check_positivity, wave_speeds
from .geometry import ConformalMetric

__version__ = "0.1.0"
