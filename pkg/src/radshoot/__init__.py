"""Shooting, classification and monotone-functional checks for radial
solutions of u'' + (n-1)/r u' + f(u) = 0, u(0) = alpha, u'(0) = 0."""

__version__ = "0.1.0"

from .nonlinearity import (HYPOTHESES, FamilyError, Nonlinearity, check_hypotheses,  # noqa: E402
                           find_beta, make_custom, make_family, parse_family)
from .radial_ode import Event, IntegrationError, ProblemConfig, Trajectory, integrate  # noqa: E402
from .shooting import (BoundState, Classification, DirichletSolution, ShootingError,  # noqa: E402
                       classify, find_bound_state, scan, solve_dirichlet, switch_points)
from .functionals import (Branch, DomainError, FunctionalTrace, H_of, extract_branches,  # noqa: E402
                          trace_P, trace_Pbar, trace_Q, trace_S12, trace_W, trace_Wtilde)
from .verify import (CheckResult, ComparisonReport, compare_pair, default_plan,  # noqa: E402
                     pair_study, run_suite)

__all__ = [
    "HYPOTHESES", "FamilyError", "Nonlinearity", "check_hypotheses", "find_beta", "make_custom",
    "make_family", "parse_family", "Event", "IntegrationError", "ProblemConfig", "Trajectory",
    "integrate", "BoundState", "Classification", "DirichletSolution", "ShootingError", "classify",
    "find_bound_state", "scan", "solve_dirichlet", "switch_points", "Branch", "DomainError",
    "FunctionalTrace", "H_of", "extract_branches", "trace_P", "trace_Pbar", "trace_Q", "trace_S12",
    "trace_W", "trace_Wtilde", "CheckResult", "ComparisonReport", "compare_pair", "default_plan",
    "pair_study", "run_suite",
]
