"""Existence of constrained couplings, with a certificate either way.

A feasible instance returns a witness coupling. An infeasible one returns a
payoff ``f`` on the candidate targets with ``alpha(f^Gamma) > beta(f)``,
read off the target-marginal rows of the LP's Farkas vector and re-checked
through :mod:`cmot.envelope`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .envelope import convex_order_potential, f_gamma
from .lp import solve_lp
from .measures import ConstraintSpec, Coupling, DiscreteMeasure
from .plans import PlanProblem, build_plan_problem, plan_violations, target_weights_on

__all__ = [
    "FeasibilityReport",
    "check_feasibility",
    "certificate_gap",
    "check_convex_order",
    "ConvexOrderResult",
]

GAP_THRESHOLD = 1e-9
MARGINAL_FLOOR = 1e-11


@dataclass(eq=False)
class FeasibilityReport:
    feasible: bool
    targets: np.ndarray
    witness: Coupling | None = None
    violating_function: np.ndarray | None = None
    gap: float | None = None
    admissible_sources: np.ndarray | None = None
    marginal: bool = False
    diagnostics: dict = field(default_factory=dict)

    def verify(self, alpha, beta, constraint, tol: float = 1e-9) -> bool:
        """Re-check the certificate without trusting the LP."""
        if self.feasible:
            return self.witness is not None and not plan_violations(self.witness, alpha, beta, constraint, tol)
        gap = certificate_gap(self.violating_function, alpha, beta, constraint, self.targets)
        return gap > GAP_THRESHOLD


def certificate_gap(f, alpha: DiscreteMeasure, beta: DiscreteMeasure, constraint: ConstraintSpec, targets=None) -> float:
    """``alpha(f^Gamma) - beta(f)``; positive values prove infeasibility."""
    Y = np.asarray(constraint.candidate_targets(beta) if targets is None else targets, dtype=float)
    f = np.asarray(f, dtype=float)
    lower = 0.0
    for x, w in zip(alpha.atoms, alpha.weights):
        val = f_gamma(f, x, constraint, Y).value
        if math.isinf(val):
            return math.inf
        lower += w * val
    return lower - float(target_weights_on(Y, beta) @ f)


def _source_admissibility(problem: PlanProblem) -> np.ndarray:
    """Whether each source atom admits at least one kernel on the targets."""
    zero = np.zeros(problem.n_tgt)
    return np.array([
        not f_gamma(zero, x, problem.constraint, problem.targets).empty
        for x in problem.alpha.atoms
    ])


def check_feasibility(
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    tol: float = GAP_THRESHOLD,
) -> FeasibilityReport:
    """Decide whether ``Pi_Gamma(alpha, beta)`` is nonempty."""
    problem = build_plan_problem(alpha, beta, constraint)
    out = solve_lp(problem.lp, tol_feas=tol)
    admissible = _source_admissibility(problem)
    diag = {"iterations": out.iterations, "phase1_residual": out.phase1_value}
    if out.optimal:
        report = FeasibilityReport(
            True, problem.targets, witness=problem.to_coupling(out.x),
            admissible_sources=admissible, diagnostics=diag,
        )
        report.marginal = out.phase1_value > MARGINAL_FLOOR
        return report
    _, v, _ = problem.split_duals(out.farkas)
    f = -v
    gap = certificate_gap(f, alpha, beta, constraint, problem.targets)
    marginal = not gap > tol
    if marginal:
        # re-solve tighter; a positive gap from the tighter certificate wins
        tight = solve_lp(problem.lp, tol_feas=tol * 1e-2, tol_opt=tol * 1e-2)
        if tight.infeasible:
            _, v2, _ = problem.split_duals(tight.farkas)
            gap2 = certificate_gap(-v2, alpha, beta, constraint, problem.targets)
            if gap2 > gap:
                f, gap = -v2, gap2
    diag["farkas"] = out.farkas
    return FeasibilityReport(
        False, problem.targets, violating_function=f, gap=gap,
        admissible_sources=admissible, marginal=marginal, diagnostics=diag,
    )


class ConvexOrderResult(NamedTuple):
    holds: bool
    violation: float | None
    mean_gap: float


def check_convex_order(alpha: DiscreteMeasure, beta: DiscreteMeasure, tol: float = 1e-10) -> ConvexOrderResult:
    """One-dimensional convex order test via potential functions.

    ``alpha <=_cx beta`` iff the means agree and ``u_alpha <= u_beta`` at
    every atom of either measure. ``violation`` is the first atom where the
    potentials are out of order (None when they are ordered).
    """
    if alpha.dim != 1 or beta.dim != 1:
        raise ValueError("convex order test is one-dimensional")
    mean_gap = abs(alpha.mean() - beta.mean())
    grid = np.union1d(alpha.atoms, beta.atoms)
    diff = convex_order_potential(alpha, grid) - convex_order_potential(beta, grid)
    bad = np.flatnonzero(diff > tol)
    violation = float(grid[bad[np.argmax(diff[bad])]]) if bad.size else None
    return ConvexOrderResult(mean_gap <= tol and violation is None, violation, mean_gap)
