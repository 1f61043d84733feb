"""safelearn: safe simultaneous learning and control of LTI systems.

Learns an unknown discrete-time linear system from streaming state
measurements while filtering nominal inputs through a
confidence-tightened projection, so time-varying linear safety
constraints hold with probability at least 1 - delta at every step.
"""

from ._core import BACKEND
from .confidence import ConfidenceConfig, beta, confidence_holds, zeta
from .estimator import RidgeEstimator, batch_fit
from .safety_filter import (FEASIBLE, INFEASIBLE, FilterOptions, FilterResult,
                            ProjectionError, StepDiagnostics, TightenedProgram,
                            build_tightened_program, robust_halfspace_tighten,
                            safe_step, solve_projection)
from .sim import (Aggregate, Plant, PoeMonitor, RunTrace, Scenario,
                  binomial_lower_bound, excitation_draw, monte_carlo,
                  run_closed_loop, run_seeds)
from .types import (Box, InputSet, LtiModel, NoiseSpec, SafetySpec,
                    VertexPolytope, check_safety, input_set_vertices)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Box", "ConfidenceConfig", "FEASIBLE", "INFEASIBLE",
    "FilterOptions", "FilterResult", "InputSet", "LtiModel", "NoiseSpec",
    "Plant", "PoeMonitor", "ProjectionError", "RidgeEstimator", "RunTrace",
    "SafetySpec", "Scenario", "StepDiagnostics", "TightenedProgram",
    "VertexPolytope", "Aggregate", "batch_fit", "beta",
    "binomial_lower_bound", "build_tightened_program", "check_safety",
    "confidence_holds", "excitation_draw", "input_set_vertices",
    "monte_carlo", "robust_halfspace_tighten", "run_closed_loop",
    "run_seeds", "safe_step", "solve_projection", "zeta",
]
