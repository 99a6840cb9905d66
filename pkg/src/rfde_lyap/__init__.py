"""Simulation and sampling-based Lyapunov certification for uncertain
time-varying delay systems."""

from .errors import ConfigurationError, ConstructionInvalid, ModelError
from .history import HistorySegment
from .signals import DisturbanceBox, DisturbanceSignal, make_signal
from .system import (
    RfdeSystem,
    build_sampled_data,
    extinction_planar_system,
    linear_decay_system,
    system_from_json,
    uncertain_delay_feedback,
)
from .integrator import Trajectory, continuity_gap, integrate
from .comparison import ComparisonProblem, check_dominated, solve_eta, solve_perturbed
from .functionals import (
    Functional,
    delay_feedback_functional,
    evaluate,
    extinction_functional,
    find_decay_rate,
)
from .dini import DiniEstimate, derivative_along, estimate_directional
from .converse import ConverseConfig, assemble_v, check_decrease, estimate_uq, horizon_T
from .certify import (
    CertReport,
    KLEnvelope,
    check_theorem_conditions,
    empirical_envelope,
    generate_reachable_states,
    periodic_reduction_check,
)
from .harness import run_scenario

__version__ = "0.1.0"

__all__ = [
    "CertReport",
    "ComparisonProblem",
    "ConfigurationError",
    "ConstructionInvalid",
    "ConverseConfig",
    "DiniEstimate",
    "DisturbanceBox",
    "DisturbanceSignal",
    "Functional",
    "HistorySegment",
    "KLEnvelope",
    "ModelError",
    "RfdeSystem",
    "Trajectory",
    "assemble_v",
    "build_sampled_data",
    "check_decrease",
    "check_dominated",
    "check_theorem_conditions",
    "continuity_gap",
    "delay_feedback_functional",
    "derivative_along",
    "empirical_envelope",
    "estimate_directional",
    "estimate_uq",
    "evaluate",
    "extinction_functional",
    "extinction_planar_system",
    "find_decay_rate",
    "generate_reachable_states",
    "horizon_T",
    "integrate",
    "linear_decay_system",
    "make_signal",
    "periodic_reduction_check",
    "run_scenario",
    "solve_eta",
    "solve_perturbed",
    "system_from_json",
    "uncertain_delay_feedback",
]
