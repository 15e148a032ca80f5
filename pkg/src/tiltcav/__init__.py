"""Driven-dissipative tilted Bose-Hubbard lattice of Kerr cavities.

Mean-field and second-order cumulant dynamics, Wannier-Stark analysis,
regime classification and phase-diagram sweeps.
"""
__version__ = "0.1.0"

from .model import ConfigError, LatticeParams, PumpProfile, RunSettings, dump_config, load_config
from .dynamics import CumulantState, MeanFieldState, Trajectory, integrate, simulate
from .observables import ClassificationResult, classify
from .wannier_stark import WSBasis, build_basis, find_anti_resonances, steady_state_profile

__all__ = [
    "ClassificationResult",
    "ConfigError",
    "CumulantState",
    "LatticeParams",
    "MeanFieldState",
    "PumpProfile",
    "RunSettings",
    "Trajectory",
    "WSBasis",
    "__version__",
    "build_basis",
    "classify",
    "dump_config",
    "find_anti_resonances",
    "integrate",
    "load_config",
    "simulate",
    "steady_state_profile",
]
