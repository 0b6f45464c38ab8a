"""Support checks for optimal constrained couplings.

* :func:`check_gamma_left_monotone` scans support triples for the forbidden
  crossing pattern under ball constraints (one dimension).
* :func:`competitor_check` solves the two-row exchange LP: the best way to
  redistribute the joint target mass of two source atoms among kernels that
  stay admissible. An optimal coupling admits no improving exchange.
* :func:`uniqueness_probe` minimises and maximises a secondary objective
  over the optimal face; a single optimiser makes both coincide.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import NoAdmissibleExchange, ValidationError
from .lp import LinearProgram, solve_lp
from .measures import (
    ConstraintKind,
    ConstraintSpec,
    Coupling,
    CostSpec,
    DiscreteMeasure,
    as_points,
    single,
)
from .plans import build_plan_problem
from .transport import solve_primal

__all__ = [
    "MonotoneReport",
    "check_gamma_left_monotone",
    "competitor_check",
    "all_pairs_competitor_check",
    "substitute_rows",
    "uniqueness_probe",
    "UniquenessReport",
]

STRICT_TOL = 1e-12
SUPPORT_TOL = 1e-10
EXCHANGE_TOL = 1e-8


@dataclass(eq=False)
class MonotoneReport:
    """Outcome of a support or exchange check.

    ``violation`` is None when the check passes. Otherwise it is a dict with
    ``kind`` in {"triple", "competitor", "membership"}; triples carry
    ``(x, y_minus), (x, y_plus), (x_prime, y_prime)``, competitors carry the
    replacement rows and the improvement ``delta``.
    """

    passes: bool
    violation: dict | None = None
    guaranteed: bool | None = None
    notes: list[str] = field(default_factory=list)


def _radius_fn(radius) -> Callable[[float], float]:
    if isinstance(radius, ConstraintSpec):
        return radius.radius_at
    if radius is None:
        return lambda x: math.inf
    if isinstance(radius, Mapping):
        table = {float(k): float(v) for k, v in radius.items()}
        return lambda x: table[float(x)]
    r = float(radius)
    return lambda x: r


def check_gamma_left_monotone(
    coupling: Coupling,
    radius=None,
    constraint: ConstraintSpec | None = None,
    cost: CostSpec | None = None,
    tol: float = SUPPORT_TOL,
) -> MonotoneReport:
    """Look for a triple ``(x, y-), (x, y+), (x', y')`` in the support with

    ``x < x'``, ``y- < y' < y+``, ``|y' - x| <= a(x)``, ``|y- - x'| <= a(x')``
    and ``|y+ - x'| <= a(x')``.

    ``radius`` may be a number, a table keyed by source atom, or a
    ball constraint; ``None`` means no radius bound. When ``constraint`` is
    given the rows are first checked for membership in ``Gamma``: a plan
    that is not admissible is reported as a ``membership`` violation.
    ``cost`` only feeds ``guaranteed``, i.e. whether optimisers are known
    to pass (``h'`` strictly convex).
    """
    if coupling.source.dim != 1:
        raise ValidationError("left-monotonicity is defined in one dimension")
    if radius is None and constraint is not None:
        radius = constraint
    a = _radius_fn(radius)
    guaranteed = None if cost is None else cost.h_prime_strictly_convex
    notes = []
    if guaranteed is False:
        notes.append("cost h' is not strictly convex; monotonicity of optimisers is not guaranteed")
    X = coupling.source.atoms
    Y = coupling.target_support
    P = coupling.matrix
    if constraint is not None:
        for i, x in enumerate(X):
            why = constraint.kernel_violation(x, Y, coupling.kernel(i), 1e-9)
            if why is not None:
                return MonotoneReport(False, {"kind": "membership", "row": i, "x": float(x), "reason": why},
                                      guaranteed, notes)
    supp = [np.sort(Y[P[i] > tol]) for i in range(len(X))]
    eps = 1e-12
    for i, ip in itertools.product(range(len(X)), repeat=2):
        x, xp = float(X[i]), float(X[ip])
        if not xp - x > STRICT_TOL or supp[i].size < 2:
            continue
        ax, axp = a(x), a(xp)
        inner = supp[i][np.abs(supp[i] - xp) <= axp + eps]
        if inner.size < 2:
            continue
        for yp in supp[ip]:
            if abs(yp - x) > ax + eps:
                continue
            below = inner[inner < yp - STRICT_TOL]
            above = inner[inner > yp + STRICT_TOL]
            if below.size and above.size:
                return MonotoneReport(False, {
                    "kind": "triple",
                    "triple": ((x, float(below[-1])), (x, float(above[0])), (xp, float(yp))),
                }, guaranteed, notes)
    return MonotoneReport(True, None, guaranteed, notes)


def _exchange_lp(coupling, constraint, cost, i, ip, form):
    Y = coupling.target_support
    Yp = as_points(Y)
    X = coupling.source.atoms
    P = coupling.matrix
    m = Y.shape[0]
    if form == "mass":
        rows_i, rows_ip = P[i], P[ip]
        mass_i, mass_ip = rows_i.sum(), rows_ip.sum()
    elif form == "kernel":
        rows_i, rows_ip = coupling.kernel(i), coupling.kernel(ip)
        mass_i = mass_ip = 1.0
    else:
        raise ValueError(f"unknown form {form!r}")
    pool = rows_i + rows_ip
    blocks = []
    for r, mass in ((i, mass_i), (ip, mass_ip)):
        mask = constraint.admissible_mask(X[r], Y)
        cols = np.flatnonzero(mask)
        caps = np.full(cols.size, np.inf)
        if constraint.kind is ConstraintKind.CAPACITY:
            caps = mass * constraint.cell_caps(X[r], Y)[cols]
        blocks.append((r, mass, cols, caps))
    nvar = sum(b[2].size for b in blocks)
    d = Yp.shape[1]
    mart = constraint.is_martingale
    nrow = m + 2 + (2 * d if mart else 0)
    A = np.zeros((nrow, nvar))
    b = np.zeros(nrow)
    c = np.zeros(nvar)
    hi = np.zeros(nvar)
    b[:m] = pool
    off = 0
    for k, (r, mass, cols, caps) in enumerate(blocks):
        sl = slice(off, off + cols.size)
        A[cols, np.arange(off, off + cols.size)] = 1.0
        A[m + k, sl] = 1.0
        b[m + k] = mass
        if mart:
            delta = Yp[cols] - as_points(single(X[r])).ravel()
            for t in range(d):
                A[m + 2 + k * d + t, sl] = delta[:, t]
        c[sl] = cost.row(X[r], Y)[cols]
        hi[sl] = caps
        off += cols.size
    return LinearProgram(c, A, b, hi=hi), blocks, (rows_i, rows_ip)


def competitor_check(
    coupling: Coupling,
    constraint: ConstraintSpec,
    cost: CostSpec,
    pair: tuple[int, int],
    form: str = "mass",
    tol: float = EXCHANGE_TOL,
) -> MonotoneReport:
    """Two-row exchange test for source atoms ``pair = (i, i')``.

    With ``form="mass"`` the competitors are row masses ``M_i, M_i'`` with
    ``M_i + M_i' = pi_i + pi_i'`` and the original row totals, so a better
    competitor can be substituted into the coupling without touching the
    marginals. ``form="kernel"`` compares conditional kernels
    ``m_x + m_x' = pi_x + pi_x'`` and unweighted costs.
    """
    i, ip = pair
    if i == ip:
        return MonotoneReport(True)
    lp, blocks, incumbent = _exchange_lp(coupling, constraint, cost, i, ip, form)
    out = solve_lp(lp)
    if not out.optimal:
        raise NoAdmissibleExchange(f"exchange LP for rows {pair} is {out.status.value}")
    m = coupling.target_support.shape[0]
    rows = []
    off = 0
    for r, mass, cols, caps in blocks:
        full = np.zeros(m)
        full[cols] = out.x[off:off + cols.size]
        rows.append(full)
        off += cols.size
    balance = np.abs(rows[0] + rows[1] - incumbent[0] - incumbent[1]).max()
    assert balance <= 1e-9, f"exchange violates mass balance by {balance:.3g}"
    Y = coupling.target_support
    X = coupling.source.atoms
    current = float(cost.row(X[i], Y) @ incumbent[0] + cost.row(X[ip], Y) @ incumbent[1])
    best = float(cost.row(X[i], Y) @ rows[0] + cost.row(X[ip], Y) @ rows[1])
    delta = current - best
    if delta > tol:
        return MonotoneReport(False, {
            "kind": "competitor", "pair": (i, ip), "form": form,
            "rows": (rows[0], rows[1]), "delta": delta,
        })
    return MonotoneReport(True, None, notes=[f"delta={delta:.3g}"])


def all_pairs_competitor_check(
    coupling: Coupling,
    constraint: ConstraintSpec,
    cost: CostSpec,
    form: str = "mass",
    tol: float = EXCHANGE_TOL,
    map_fn: Callable = map,
) -> MonotoneReport:
    """Run :func:`competitor_check` on every pair of positive-mass rows.

    Pairs are independent; pass an executor's ``map`` as ``map_fn`` to run
    them concurrently. Returns the first failing pair's report.
    """
    pairs = list(itertools.combinations(range(len(coupling.source)), 2))
    reports = list(map_fn(lambda p: competitor_check(coupling, constraint, cost, p, form, tol), pairs))
    for rep in reports:
        if not rep.passes:
            return rep
    return MonotoneReport(True, None, notes=[f"{len(pairs)} pairs checked"])


def substitute_rows(coupling: Coupling, violation: dict) -> Coupling:
    """Apply a mass-form competitor to ``coupling``."""
    if violation.get("form") != "mass":
        raise ValueError("only mass-form competitors can be substituted")
    i, ip = violation["pair"]
    P = coupling.matrix.copy()
    P[i], P[ip] = violation["rows"]
    return Coupling(coupling.source, coupling.target_support, np.clip(P, 0.0, None))


@dataclass(eq=False)
class UniquenessReport:
    unique: bool
    plan: Coupling
    spread: float
    value: float
    alternatives: tuple[np.ndarray, np.ndarray] | None = None


def uniqueness_probe(
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    cost: CostSpec,
    seed: int = 0,
    tol: float = 1e-8,
    require_two_atoms: bool = True,
) -> UniquenessReport:
    """Decide whether the optimal plan is unique.

    The optimal face is cut out by complementary slackness (cells with
    positive reduced cost fixed at zero, negative at their cap); a random
    secondary objective is minimised and maximised over it and the two
    optimisers compared entrywise.
    """
    if require_two_atoms and len(alpha) != 2:
        raise ValidationError("uniqueness probe expects a two-atom source measure")
    rep = solve_primal(alpha, beta, constraint, cost)
    problem = build_plan_problem(alpha, beta, constraint, cost)
    lp = problem.lp
    d = lp.c - lp.A.T @ _stacked_duals(problem, rep)
    lo = lp.lo.copy()
    hi = lp.hi.copy()
    hi[d > 1e-9] = lo[d > 1e-9]
    pinned = d < -1e-9
    lo[pinned] = hi[pinned]
    g = np.random.default_rng(seed).standard_normal(lp.c.size)
    sols = []
    for sgn in (1.0, -1.0):
        out = solve_lp(LinearProgram(sgn * g, lp.A, lp.b, lo, hi))
        if not out.optimal:
            # rounding pushed the face empty; the incumbent is the only point
            sols.append(rep.coupling.matrix)
            continue
        sols.append(problem.to_matrix(out.x))
    spread = float(np.abs(sols[0] - sols[1]).max())
    return UniquenessReport(spread <= tol, rep.coupling, spread, rep.primal_value, (sols[0], sols[1]))


def _stacked_duals(problem, rep) -> np.ndarray:
    parts = [rep.lp_duals["source"], rep.lp_duals["target"]]
    if problem.constraint.is_martingale:
        parts.append(np.asarray(rep.lp_duals["barycenter"]).ravel())
    return np.concatenate(parts)
