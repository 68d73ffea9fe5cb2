"""Conformally Euclidean geometry: geodesics, boundary distances and convexity checks."""
from __future__ import annotations

from .curvature import (
    ConvexityReport,
    FoliationCandidate,
    SecondFundamentalForm,
    SimplicityVerdict,
    conjugate_point_scan,
    conjugate_time_to_exit,
    conjugate_times_to_exit,
    convexity_check_function,
    default_convex_function,
    is_strictly_convex_boundary,
    sample_geodesics,
    second_fundamental_form,
    simplicity_check,
)
from .geodesics import (
    DistanceResult,
    ExitRecord,
    GeodesicPath,
    NoBranchError,
    PossiblyTrappedError,
    boundary_distance,
    boundary_distances_from,
    diameter,
    distance_table,
    exit_time_and_point,
    geodesic_shoot,
    shoot_to_exit,
)
from .metric import ConformalMetric, NonPositiveSpeedError, default_step, trapping_cap
from .tables import TravelTimeTable
