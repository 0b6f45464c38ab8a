"""Transport under cell caps ``pi(x_i, y_j) <= alpha_i a(x_i, y_j) R(x_i, y_j)``.

Solving goes through the generic constrained solver with the capacity
constraint; this module adds the instance type and the extremality check
(optimal plans at cap on a set of cells and empty elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleInstance, ValidationError
from .feasibility import check_feasibility
from .measures import ConstraintSpec, Coupling, CostSpec, DiscreteMeasure
from .transport import SolveReport, solve

__all__ = [
    "CapacityInstance",
    "ExtremalityReport",
    "solve_capacity",
    "check_extremality",
    "cell_caps",
]

EMPTY_TOL = 1e-9
SATURATION_RTOL = 1e-9
EXTREME_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class CapacityInstance:
    """Marginals, a stochastic reference matrix ``R`` and a ratio bound ``a``.

    Rows of ``reference`` and ``bound`` follow ``alpha.atoms``, columns follow
    ``beta.atoms``. ``bound`` may contain ``inf`` (no cap on that cell).
    """

    alpha: DiscreteMeasure
    beta: DiscreteMeasure
    reference: np.ndarray
    bound: np.ndarray
    cost: CostSpec

    def __post_init__(self):
        R = np.asarray(self.reference, dtype=float)
        a = np.broadcast_to(np.asarray(self.bound, dtype=float), R.shape).copy()
        if R.shape != (len(self.alpha), len(self.beta)):
            raise ValidationError(f"reference must have shape {(len(self.alpha), len(self.beta))}")
        object.__setattr__(self, "reference", R)
        object.__setattr__(self, "bound", a)
        self.constraint  # validates R and a

    @property
    def constraint(self) -> ConstraintSpec:
        return ConstraintSpec.capacity(self.reference, self.bound, self.alpha.atoms, self.beta.atoms)


def cell_caps(instance: CapacityInstance) -> np.ndarray:
    """Mass caps ``alpha_i a_ij R_ij``; null reference cells get cap 0."""
    R, a = instance.reference, instance.bound
    local = np.multiply(a, R, out=np.zeros(R.shape), where=R > 0)
    return instance.alpha.weights[:, None] * local


def solve_capacity(instance: CapacityInstance, dual: bool = True, tol: float = 1e-9) -> SolveReport:
    """Cheapest capped coupling; ``InfeasibleInstance`` when none exists.

    The raised exception carries the feasibility report, whose
    ``violating_function`` certifies that the caps cannot carry ``beta``.
    """
    cons = instance.constraint
    try:
        return solve(instance.alpha, instance.beta, cons, instance.cost, dual=dual, tol=tol)
    except InfeasibleInstance as exc:
        if exc.report is None:
            exc.report = check_feasibility(instance.alpha, instance.beta, cons)
        raise


@dataclass(eq=False)
class ExtremalityReport:
    extreme: bool
    interior_mass: float
    W: list[tuple[int, int]]
    interior: list[tuple[int, int]] = field(default_factory=list)
    tie: bool | None = None
    basis_bound: int = 0

    @property
    def within_basis_bound(self) -> bool:
        return len(self.interior) <= self.basis_bound


def check_extremality(
    instance: CapacityInstance,
    coupling: Coupling,
    tol: float = EXTREME_TOL,
    tie: bool | None = None,
) -> ExtremalityReport:
    """Classify cells as empty, saturated or interior.

    A cell is empty below ``1e-9`` mass and saturated within ``1e-9`` of its
    cap (relative). The plan is extreme when the interior carries at most
    ``tol`` of the total mass. ``tie`` is passed through from the solver so
    that non-extreme optimisers of degenerate costs are labelled, not hidden.
    The number of interior cells of an LP vertex never exceeds
    ``rows + cols - 1``; the report records that bound.
    """
    P = coupling.matrix
    caps = cell_caps(instance)
    if P.shape != caps.shape:
        raise ValidationError("coupling does not match the instance")
    empty = P <= EMPTY_TOL
    finite = np.isfinite(caps)
    slack = np.where(finite, caps - P, np.inf)
    saturated = ~empty & finite & (slack <= np.maximum(SATURATION_RTOL * caps, 1e-15))
    interior = ~empty & ~saturated
    mass = float(P[interior].sum())
    n, m = P.shape
    return ExtremalityReport(
        extreme=mass <= tol * P.sum(),
        interior_mass=mass,
        W=[tuple(map(int, c)) for c in np.argwhere(saturated)],
        interior=[tuple(map(int, c)) for c in np.argwhere(interior)],
        tie=tie,
        basis_bound=n + m - 1,
    )
