"""Constrained martingale optimal transport on finite grids."""

from .capacity import CapacityInstance, ExtremalityReport, check_extremality, solve_capacity
from .envelope import EnvelopeResult, convex_order_potential, f_gamma, f_gamma_multiperiod, lower_hull, r_c_gamma
from .errors import (
    CmotError,
    GridOverflow,
    InfeasibleInstance,
    MarginalMismatch,
    NoAdmissibleExchange,
    NumericalBreakdown,
    SchemaViolation,
    ValidationError,
)
from .feasibility import FeasibilityReport, check_convex_order, check_feasibility, certificate_gap
from .io import RunReport, Scenario, emit_report, load_scenario, parse_report
from .lp import LinearProgram, LpStatus, solve_lp, verify_certificate
from .measures import ConstraintKind, ConstraintSpec, CostSpec, Coupling, DiscreteMeasure, measure
from .monotone import (
    all_pairs_competitor_check,
    check_gamma_left_monotone,
    competitor_check,
    uniqueness_probe,
)
from .multiperiod import (
    MarginalCurve,
    PathMeasure,
    check_multimarginal,
    paste,
    skorokhod_discrete,
    verify_marginals,
)
from .transport import SolveReport, dual_objective, evaluate_plan, solve, solve_dual, solve_primal

__version__ = "0.1.0"
