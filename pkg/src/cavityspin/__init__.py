"""Laser-driven three-level atoms in coupled cavities and their effective spin chains."""

from .config import RunConfig, load_config, load_preset, parse_config
from .elimination import (DevicePreset, FitResult, NoiseParams, ValidityReport, check_validity,
                          derive_params, derive_xy_params, derive_zz_params, estimate_feasibility,
                          fit_effective_params)
from .experiments import (InterleaveSpec, build_interleave_schedule, run_cluster, run_comparison,
                          run_sweep)
from .models import SpinParams, XYDriveParams, ZZDriveParams, build_full_xy, build_full_zz
from .propagation import IntegratorConfig, Schedule, TimeDependentHamiltonian, Trajectory, evolve

__version__ = "0.1.0"

__all__ = [
    "DevicePreset", "FitResult", "IntegratorConfig", "InterleaveSpec", "NoiseParams", "Schedule",
    "SpinParams", "TimeDependentHamiltonian", "Trajectory", "ValidityReport", "XYDriveParams",
    "ZZDriveParams", "build_full_xy", "build_full_zz", "build_interleave_schedule",
    "check_validity", "derive_params", "derive_xy_params", "derive_zz_params",
    "estimate_feasibility", "evolve", "fit_effective_params", "run_cluster", "run_comparison",
    "run_sweep", "RunConfig", "load_config", "load_preset", "parse_config",
]
