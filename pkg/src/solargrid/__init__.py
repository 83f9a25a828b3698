"""Steady-state grid-integration studies for a utility-scale PV plant.

Load flow, reactive compensation, harmonic penetration with tuned filters,
voltage-stability margins and a learned SVC voltage controller, tied together
by a compliance study runner.
"""

from .compensation import apply_svc, required_compensation
from .harmonics import HarmonicSource, harmonic_scan, ieee519_check, thd
from .network import Network, build_network, load_network
from .powerflow import SolverOptions, solve_load_flow
from .sizing import PlantParams, size_plant
from .stability import literal_percent_b, loading_margin
from .study import StudyPolicy, load_case, run_study

__version__ = "0.1.0"

__all__ = [
    "HarmonicSource", "Network", "PlantParams", "SolverOptions", "StudyPolicy", "apply_svc",
    "build_network", "harmonic_scan", "ieee519_check", "literal_percent_b", "load_case",
    "load_network", "loading_margin", "required_compensation", "run_study", "size_plant",
    "solve_load_flow", "thd",
]
