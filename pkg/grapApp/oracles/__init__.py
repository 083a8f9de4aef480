from .bounds import BoundReport, best_cosine, bound_check, grid_argmax_weights
from .hypergrad import (
    EmaState,
    QuadraticTask,
    ema_multistep_approx,
    exact_multistep_hypergradient,
    fd_hypergradient,
    fd_rollout_hypergradient,
    firstorder_multistep_approx,
    stepped_downstream_grad,
)
from .suites import SUITES, SuiteResult, run_suites

__all__ = [
    "BoundReport",
    "EmaState",
    "QuadraticTask",
    "SUITES",
    "SuiteResult",
    "best_cosine",
    "bound_check",
    "ema_multistep_approx",
    "exact_multistep_hypergradient",
    "fd_hypergradient",
    "fd_rollout_hypergradient",
    "firstorder_multistep_approx",
    "grid_argmax_weights",
    "run_suites",
    "stepped_downstream_grad",
]
