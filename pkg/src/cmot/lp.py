"""Dense bounded-variable primal simplex.

Solves ``min c^T x  s.t.  A x = b,  lo <= x <= hi`` with a two-phase revised
simplex. Phase 1 minimises the sum of artificial variables; when the phase-1
optimum is positive its dual multipliers are returned as a Farkas
certificate of infeasibility. Pricing is Dantzig's rule with a switch to
Bland's rule once the objective stalls for ``5 * (m + n)`` iterations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalBreakdown

__all__ = [
    "LinearProgram",
    "LpOutcome",
    "LpStatus",
    "solve_lp",
    "verify_certificate",
    "farkas_value",
]

PIVOT_TOL = 1e-12
_REFACTOR_EVERY = 25


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """Equality-form LP with box bounds; ``hi`` may contain ``inf``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.ndim != 2:
            if A.size == 0:
                A = A.reshape(0, c.size)
            else:
                raise DimensionMismatch("A must be two-dimensional")
        m, n = A.shape
        if c.size != n:
            raise DimensionMismatch(f"objective has {c.size} entries, A has {n} columns")
        if b.size != m:
            raise DimensionMismatch(f"rhs has {b.size} entries, A has {m} rows")
        lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if lo.size != n or hi.size != n:
            raise DimensionMismatch("bounds must have one entry per variable")
        if not np.all(np.isfinite(lo)):
            raise DimensionMismatch("lower bounds must be finite")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(A)) or not np.all(np.isfinite(c)):
            raise DimensionMismatch("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpOutcome:
    """Result of :func:`solve_lp`.

    ``duals`` and ``reduced_costs`` are populated for optimal outcomes,
    ``farkas`` for infeasible ones and ``ray`` for unbounded ones.
    """

    status: LpStatus
    x: np.ndarray | None = None
    value: float | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    farkas: np.ndarray | None = None
    ray: np.ndarray | None = None
    basis: tuple[int, ...] = ()
    iterations: int = 0
    dual_degenerate: bool = False
    used_bland: bool = False
    phase1_value: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    @property
    def infeasible(self) -> bool:
        return self.status is LpStatus.INFEASIBLE


class _Simplex:
    """Revised simplex on ``A x = b, 0 <= x <= u`` with an explicit basis inverse."""

    def __init__(self, A, b, u, basis, at_upper, tol_feas, tol_opt, max_iter):
        self.A = A
        self.b = b
        self.u = u
        self.m, self.n = A.shape
        self.basis = list(basis)
        self.at_upper = at_upper
        self.tol_feas = tol_feas
        self.tol_opt = tol_opt
        self.max_iter = max_iter
        self.iterations = 0
        self.used_bland = False
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis matrix") from exc

    def basic_values(self):
        rhs = self.b - self.A[:, self.at_upper] @ self.u[self.at_upper]
        return self.Binv @ rhs

    def full_x(self):
        x = np.where(self.at_upper, self.u, 0.0)
        x[self.basis] = self.basic_values()
        return x

    def duals(self, c):
        return self.Binv.T @ c[self.basis]

    def run(self, c, allowed):
        """Iterate to optimality for cost ``c``; return "optimal" or "unbounded"."""
        m, n = self.m, self.n
        stall_limit = 5 * (m + n)
        is_basic = np.zeros(n, dtype=bool)
        is_basic[self.basis] = True
        movable = allowed & (self.u > 0)
        bland = False
        stall = 0
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalBreakdown(f"iteration limit {self.max_iter} reached")
            if since_refactor >= _REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            xB = self.basic_values()
            y = self.Binv.T @ c[self.basis]
            d = c - self.A.T @ y
            cand = movable & ~is_basic & (
                (~self.at_upper & (d < -self.tol_opt)) | (self.at_upper & (d > self.tol_opt))
            )
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                self._refactor()
                return "optimal"
            if bland:
                q = int(idx[0])
            else:
                q = int(idx[np.argmax(np.abs(d[idx]))])
            sigma = -1.0 if self.at_upper[q] else 1.0
            alpha = self.Binv @ self.A[:, q]
            rate = -sigma * alpha
            ub = self.u[self.basis]
            ratios = np.full(m, np.inf)
            dec = rate < -PIVOT_TOL
            ratios[dec] = np.maximum(xB[dec], 0.0) / -rate[dec]
            inc = (rate > PIVOT_TOL) & np.isfinite(ub)
            ratios[inc] = np.maximum(ub[inc] - xB[inc], 0.0) / rate[inc]
            t_basic = ratios.min() if m else np.inf
            t_flip = self.u[q]
            if not np.isfinite(t_basic) and not np.isfinite(t_flip):
                self.unbounded_col = q
                self.unbounded_sigma = sigma
                self.unbounded_rate = rate
                return "unbounded"
            self.iterations += 1
            since_refactor += 1
            if t_flip <= t_basic:
                self.at_upper[q] = not self.at_upper[q]
                step = t_flip
            else:
                step = t_basic
                ties = np.flatnonzero(ratios <= t_basic + 1e-12)
                if bland:
                    r = int(min(ties, key=lambda i: self.basis[i]))
                else:
                    r = int(ties[np.argmax(np.abs(rate[ties]))])
                if abs(alpha[r]) < PIVOT_TOL:
                    raise NumericalBreakdown("pivot below tolerance")
                leaving = self.basis[r]
                self.at_upper[leaving] = bool(rate[r] > 0)
                is_basic[leaving] = False
                is_basic[q] = True
                self.at_upper[q] = False
                self.basis[r] = q
                # eta update of the basis inverse
                piv_row = self.Binv[r] / alpha[r]
                self.Binv -= np.outer(alpha, piv_row)
                self.Binv[r] = piv_row
            if step > 0.0 and abs(d[q]) * step > 1e-12:
                stall = 0
            else:
                stall += 1
                if stall >= stall_limit and not bland:
                    bland = True
                    self.used_bland = True


def solve_lp(
    lp: LinearProgram,
    tol_feas: float = 1e-9,
    tol_opt: float = 1e-9,
    max_iter: int | None = None,
) -> LpOutcome:
    """Solve ``lp`` and return an outcome carrying its own evidence.

    Optimal outcomes carry the optimal basic solution and the dual vector;
    infeasible outcomes carry a Farkas vector ``y`` for which
    :func:`farkas_value` is positive.
    """
    m, n = lp.shape
    lo, hi = lp.lo, lp.hi
    u = hi - lo
    if np.any(u < 0):
        # crossed bounds: certificate is the empty combination of rows
        j = int(np.flatnonzero(u < 0)[0])
        return LpOutcome(LpStatus.INFEASIBLE, farkas=np.zeros(m), meta={"crossed_bound": j})
    b = lp.b - lp.A @ lo
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = np.hstack([lp.A * sign[:, None], np.eye(m)])
    b1 = b * sign
    u1 = np.concatenate([u, np.full(m, np.inf)])
    max_iter = max_iter or 200 * (m + n) + 1000

    sx = _Simplex(
        A1, b1, u1,
        basis=range(n, n + m),
        at_upper=np.zeros(n + m, dtype=bool),
        tol_feas=tol_feas, tol_opt=tol_opt, max_iter=max_iter,
    )
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    sx.run(c1, allowed)
    x1 = sx.full_x()
    w = float(x1[n:].sum())
    if w > tol_feas:
        y = sx.duals(c1) * sign
        return LpOutcome(
            LpStatus.INFEASIBLE,
            farkas=y,
            basis=tuple(sx.basis),
            iterations=sx.iterations,
            used_bland=sx.used_bland,
            phase1_value=w,
        )

    # phase 2: artificials pinned at zero, never re-enter
    sx.u = np.concatenate([u, np.zeros(m)])
    c2 = np.concatenate([lp.c, np.zeros(m)])
    allowed[n:] = False
    res = sx.run(c2, allowed)
    if res == "unbounded":
        q = sx.unbounded_col
        ray = np.zeros(n + m)
        ray[q] = sx.unbounded_sigma
        ray[sx.basis] = sx.unbounded_rate
        return LpOutcome(
            LpStatus.UNBOUNDED,
            ray=ray[:n],
            basis=tuple(sx.basis),
            iterations=sx.iterations,
            used_bland=sx.used_bland,
            phase1_value=w,
        )
    xfull = sx.full_x()
    x = lo + np.clip(xfull[:n], 0.0, u)
    y = sx.duals(c2) * sign
    d = lp.c - lp.A.T @ y
    basic = np.zeros(n + m, dtype=bool)
    basic[sx.basis] = True
    free_nonbasic = ~basic[:n] & (u > 0)
    degenerate = bool(np.any(np.abs(d[free_nonbasic]) <= max(tol_opt, 1e-9)))
    return LpOutcome(
        LpStatus.OPTIMAL,
        x=x,
        value=float(lp.c @ x),
        duals=y,
        reduced_costs=d,
        basis=tuple(sx.basis),
        iterations=sx.iterations,
        dual_degenerate=degenerate,
        used_bland=sx.used_bland,
        phase1_value=w,
    )


def farkas_value(lp: LinearProgram, y: np.ndarray, tol: float = 1e-8) -> float:
    """Certificate margin ``y^T b - sup_{lo<=x<=hi} (A^T y)^T x``.

    Returns ``-inf`` when the supremum is unbounded beyond ``tol``. A
    positive margin proves ``A x = b, lo <= x <= hi`` has no solution.
    """
    y = np.asarray(y, dtype=float)
    r = lp.A.T @ y
    finite = np.isfinite(lp.hi)
    if np.any(r[~finite] > tol):
        return -np.inf
    sup = np.where(r > 0, r * np.where(finite, lp.hi, 0.0), r * lp.lo)
    return float(y @ lp.b - sup.sum())


def _dual_bound(lp: LinearProgram, y: np.ndarray, tol: float) -> float:
    d = lp.c - lp.A.T @ y
    finite = np.isfinite(lp.hi)
    if np.any(d[~finite] < -tol):
        return -np.inf
    low = np.where(d >= 0, d * lp.lo, d * np.where(finite, lp.hi, 0.0))
    return float(y @ lp.b + low.sum())


def verify_certificate(lp: LinearProgram, outcome: LpOutcome, tol: float = 1e-8) -> bool:
    """Re-check the evidence in ``outcome`` against ``lp`` from scratch."""
    try:
        if outcome.status is LpStatus.OPTIMAL:
            x = np.asarray(outcome.x, dtype=float)
            if x.shape != lp.c.shape:
                return False
            if np.any(x < lp.lo - tol) or np.any(x > lp.hi + tol):
                return False
            if lp.A.size and np.max(np.abs(lp.A @ x - lp.b), initial=0.0) > tol:
                return False
            value = float(lp.c @ x)
            if abs(value - outcome.value) > tol * (1 + abs(value)):
                return False
            if outcome.duals is None:
                return False
            dual = _dual_bound(lp, outcome.duals, tol)
            return value - dual <= tol * (1 + abs(value))
        if outcome.status is LpStatus.INFEASIBLE:
            if outcome.farkas is None:
                return False
            return farkas_value(lp, outcome.farkas, tol) > tol
        if outcome.status is LpStatus.UNBOUNDED:
            ray = np.asarray(outcome.ray, dtype=float)
            if lp.A.size and np.max(np.abs(lp.A @ ray), initial=0.0) > tol:
                return False
            finite = np.isfinite(lp.hi)
            if np.any(ray < -tol) or np.any(np.abs(ray[finite]) > tol):
                return False
            return float(lp.c @ ray) < -tol
    except (TypeError, ValueError):
        return False
    return False
