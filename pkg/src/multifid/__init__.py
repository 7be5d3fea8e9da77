"""Multi-fidelity co-simulation for validating sampling-based motion planners.

The same Frenet planner runs against a low-fidelity backend that enforces
each planned state exactly and a high-fidelity backend that tracks the plan
through a controller and lagged vehicle dynamics. Comparing the two exposes
the execution gap the planner never sees.
"""
__version__ = "0.1.0"

from .backends import ControllerGains, HifiBackend, LofiBackend, hifi_step, lofi_step
from .cosim import RunConfig, RunLog, run_batch, run_scenario
from .evaluation import aggregate_grid, compare_runs, format_runtime_table, runtime_stats
from .kernels import BACKEND as KERNEL_BACKEND
from .planner import PlannerConfig, plan
from .scenario import (
    Scenario,
    crossing_scenario,
    generate_grid,
    grid_preset,
    load_scenario,
    save_scenario,
    scurve_scenario,
)
from .vehicle import CATALOG, VehicleParams, VehicleState, vehicle_catalog

__all__ = [
    "CATALOG", "ControllerGains", "HifiBackend", "KERNEL_BACKEND", "LofiBackend", "PlannerConfig",
    "RunConfig", "RunLog", "Scenario", "VehicleParams", "VehicleState", "aggregate_grid", "compare_runs",
    "crossing_scenario", "format_runtime_table", "generate_grid", "grid_preset", "hifi_step", "load_scenario",
    "lofi_step", "plan", "run_batch", "run_scenario", "runtime_stats", "save_scenario", "scurve_scenario",
    "vehicle_catalog",
]
