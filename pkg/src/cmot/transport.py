"""Constrained transport with linear costs and its Kantorovich dual.

The primal is the LP over ``Pi_Gamma(alpha, beta)``. The dual potential
``phi`` is minus the LP multiplier of the target-marginal rows; the dual
value ``alpha(R phi) - beta(phi)`` is then recomputed through the envelope
operator rather than taken from the LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envelope import r_c_gamma
from .errors import InfeasibleInstance, NumericalBreakdown
from .feasibility import check_feasibility
from .lp import LpStatus, solve_lp
from .measures import ConstraintSpec, Coupling, CostSpec, DiscreteMeasure
from .plans import build_plan_problem, target_weights_on

__all__ = [
    "SolveReport",
    "solve_primal",
    "solve_dual",
    "solve",
    "evaluate_plan",
    "dual_objective",
    "dual_pair_slack",
]

DUALITY_GAP_TOL = 1e-7


@dataclass(eq=False)
class SolveReport:
    primal_value: float
    coupling: Coupling
    targets: np.ndarray
    dual_value: float | None = None
    phi: np.ndarray | None = None
    f_dual: np.ndarray | None = None
    gap: float | None = None
    unique: bool | None = None
    lp_duals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal_coupling(self) -> Coupling:
        return self.coupling


def evaluate_plan(coupling: Coupling, cost: CostSpec) -> float:
    """Total cost ``sum_ij pi_ij C(x_i, y_j)`` over the support of ``coupling``."""
    P = coupling.matrix
    if not np.any(P):
        return 0.0
    C = cost.matrix(coupling.source.atoms, coupling.target_support)
    return float(np.sum(P * C))


def solve_primal(
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    cost: CostSpec,
    tol: float = 1e-9,
) -> SolveReport:
    """Minimise the expected cost over ``Pi_Gamma(alpha, beta)``.

    Raises
    ------
    InfeasibleInstance
        When no admissible plan exists; ``exc.report`` holds the
        feasibility certificate.
    """
    problem = build_plan_problem(alpha, beta, constraint, cost)
    out = solve_lp(problem.lp, tol_feas=tol, tol_opt=tol)
    if out.status is LpStatus.INFEASIBLE:
        raise InfeasibleInstance("no admissible coupling", check_feasibility(alpha, beta, constraint))
    if out.status is LpStatus.UNBOUNDED:
        # finite data over a bounded polytope
        raise NumericalBreakdown("transport LP reported unbounded")
    coupling = problem.to_coupling(out.x)
    u, v, w = problem.split_duals(out.duals)
    return SolveReport(
        primal_value=float(np.sum(coupling.matrix * problem.cost_matrix, where=problem.admissible)),
        coupling=coupling,
        targets=problem.targets,
        unique=not out.dual_degenerate,
        lp_duals={"source": u, "target": v, "barycenter": w},
        diagnostics={"iterations": out.iterations, "bland": out.used_bland},
    )


def dual_objective(
    phi,
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    cost: CostSpec,
    targets=None,
):
    """``(alpha(R phi) - beta(phi), R phi)`` for any potential ``phi`` on the targets.

    By weak duality the first entry never exceeds the primal value.
    """
    Y = np.asarray(constraint.candidate_targets(beta) if targets is None else targets, dtype=float)
    phi = np.asarray(phi, dtype=float)
    R = np.array([r_c_gamma(phi, x, cost, constraint, Y).value for x in alpha.atoms])
    if np.any(np.isinf(R)):
        return math.inf, R
    return float(alpha.weights @ R - target_weights_on(Y, beta) @ phi), R


def solve_dual(
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    cost: CostSpec,
    tol: float = 1e-9,
    primal: SolveReport | None = None,
) -> SolveReport:
    """Primal solve plus the dual potential and the duality gap."""
    rep = primal or solve_primal(alpha, beta, constraint, cost, tol)
    phi = -np.asarray(rep.lp_duals["target"], dtype=float)
    value, R = dual_objective(phi, alpha, beta, constraint, cost, rep.targets)
    rep.phi = phi
    rep.f_dual = R
    rep.dual_value = value
    rep.gap = abs(rep.primal_value - value)
    rep.diagnostics["gap_ok"] = rep.gap <= DUALITY_GAP_TOL * max(1.0, abs(rep.primal_value))
    return rep


def solve(alpha, beta, constraint, cost, dual: bool = True, tol: float = 1e-9) -> SolveReport:
    rep = solve_primal(alpha, beta, constraint, cost, tol)
    return solve_dual(alpha, beta, constraint, cost, tol, primal=rep) if dual else rep


def dual_pair_slack(
    report: SolveReport,
    alpha: DiscreteMeasure,
    cost: CostSpec,
    kernels,
) -> float:
    """Largest violation of ``f(x) + int g dp <= int C(x, .) dp`` with ``g = -phi``.

    ``kernels`` is an iterable of ``(i, p)`` pairs, ``p`` a kernel on the
    report's targets that should be admissible from ``alpha.atoms[i]``.
    """
    worst = -math.inf
    for i, p in kernels:
        p = np.asarray(p, dtype=float)
        Crow = cost.row(alpha.atoms[i], report.targets)
        lhs = report.f_dual[i] - p @ report.phi
        worst = max(worst, lhs - p @ Crow)
    return worst
