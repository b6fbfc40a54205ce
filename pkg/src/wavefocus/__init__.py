"""Boundary control for acoustic wave equations: cutoff and focusing sources from boundary data."""

from .boundary_ops import BoundaryTimeMask, ControlPair, connecting_K, filter_J, filter_Q, restrict_P, time_reverse
from .config import ConfigError, ExperimentConfig, load_config
from .control_iter import IterationConfig, iterate_cutoff, solve_direct
from .domain import MediumSpec, build_grid, c_hat, cut_time, diameter, domain_of_influence, travel_time
from .focusing import FocusSpec, delta_test, focus_iterate
from .signals import BoundarySignal, SignalLattice
from .wave_sim import WaveSolver, build_oracle, make_lattice, solve_wave

__all__ = [
    "BoundarySignal",
    "BoundaryTimeMask",
    "ConfigError",
    "ControlPair",
    "ExperimentConfig",
    "FocusSpec",
    "IterationConfig",
    "MediumSpec",
    "SignalLattice",
    "WaveSolver",
    "build_grid",
    "build_oracle",
    "c_hat",
    "connecting_K",
    "cut_time",
    "delta_test",
    "diameter",
    "domain_of_influence",
    "filter_J",
    "filter_Q",
    "focus_iterate",
    "iterate_cutoff",
    "load_config",
    "make_lattice",
    "restrict_P",
    "solve_direct",
    "solve_wave",
    "time_reverse",
    "travel_time",
]
