"""Eikonal travel times, conformal tomography, density fitting and the rigidity experiment."""
from __future__ import annotations

from .density import DensityFit, fit_density, lame_with_density
from .eikonal import EikonalField, EikonalGrid, NonPositiveSpeedError, eikonal_solve
from .rigidity import RigidityReport, rigidity_experiment
from .tomography import InversionDivergenceError, InversionResult, gradient_selfcheck, invert_conformal
