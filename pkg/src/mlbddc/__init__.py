"""Multilevel BDDC-preconditioned Krylov solvers for structured FE systems."""

from .bddc import MultilevelBddc, setup_bddc
from .errors import ConfigError, MlbddcError, NumericalError
from .fem import ProblemSpec, assemble_global, generate_box_mesh
from .harness import (RunConfig, load_config, parse_hierarchy, run_configs,
                      run_experiment, run_sweep)
from .krylov import SolveReport, bicgstab, pcg

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "MlbddcError",
    "MultilevelBddc",
    "NumericalError",
    "ProblemSpec",
    "RunConfig",
    "SolveReport",
    "assemble_global",
    "bicgstab",
    "generate_box_mesh",
    "load_config",
    "parse_hierarchy",
    "pcg",
    "run_configs",
    "run_experiment",
    "run_sweep",
    "setup_bddc",
    "__version__",
]
