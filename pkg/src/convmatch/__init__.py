"""Averaged-model simulation and analysis of grid-forming DC/AC converters.

The main entry points are re-exported here; the submodules hold the rest.
"""

from .errors import (
    ConfigError, ConvmatchError, DivergenceError, NoSolutionError, SingularityError,
    SolverError,
)
from .kernel import BACKEND
from .plant import ConverterParams, LoadModel, PlantState
from .sim import SimConfig, SimTrace, simulate
from .matching_ctrl import MatchingController
from .classic_ctrl import (
    DroopParams, InnerLoopController, OpenLoopModulation, PolarVoc, SineReference,
    VdpReference,
)
from .outer_ctrl import AmpTrackConfig, EtaTrackConfig, IdcPidConfig, ReactiveShapeParams
from .analysis import dq_equilibrium, steady_state_profile
from .network import build_network, simulate_network

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "ConvmatchError", "DivergenceError", "NoSolutionError",
    "SingularityError", "SolverError", "ConverterParams", "LoadModel", "PlantState",
    "SimConfig", "SimTrace", "simulate", "MatchingController", "DroopParams",
    "InnerLoopController", "OpenLoopModulation", "PolarVoc", "SineReference",
    "VdpReference", "AmpTrackConfig", "EtaTrackConfig", "IdcPidConfig",
    "ReactiveShapeParams", "dq_equilibrium", "steady_state_profile", "build_network",
    "simulate_network",
]
