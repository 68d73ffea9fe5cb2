"""Time-domain elastic wave simulation, DN data and first-arrival picking."""
from __future__ import annotations

from .config import BoundarySource, CFLViolationError, SimulationConfig, ricker, ricker_dot
from .dn import ConfigMismatchError, DNComparison, DNDataset, assemble_dn_data, compare_dn, noise_floor
from .picking import ArrivalTable, Pick, pick_arrivals, pick_first_arrival, travel_time_table
from .solver import SolverDivergenceError, WaveField, energy_increase, neumann_trace, solve_ibvp
