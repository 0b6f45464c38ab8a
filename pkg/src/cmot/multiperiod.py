"""Several marginals: pairwise feasibility, pasting, and path-grid LPs.

Constraints act on the current state only, so path measures are stored as
stagewise transition matrices over state grids; gluing per-interval
couplings is a product of their disintegration kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .envelope import f_gamma_multiperiod
from .errors import GridOverflow, MarginalMismatch, ValidationError
from .feasibility import FeasibilityReport, check_feasibility
from .lp import LinearProgram, solve_lp
from .measures import (
    ConstraintKind,
    ConstraintSpec,
    Coupling,
    DiscreteMeasure,
    as_points,
    single,
)
from .plans import target_weights_on

__all__ = [
    "MarginalCurve",
    "PathMeasure",
    "MultimarginalReport",
    "PathProblemResult",
    "SkorokhodReport",
    "check_multimarginal",
    "paste",
    "verify_marginals",
    "kernel_violations",
    "solve_path_problem",
    "skorokhod_discrete",
]

MASS_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MarginalCurve:
    """Marginals ``alpha_0, ..., alpha_n`` at increasing times with step radii.

    ``radii[i]`` (a number or a table keyed by atoms of ``alpha_i``) bounds
    the move from ``t_i`` to ``t_{i+1}``; it is ignored unless ``kind`` is
    ``martingale_ball``.
    """

    times: tuple[int, ...]
    marginals: tuple[DiscreteMeasure, ...]
    radii: tuple = ()
    kind: ConstraintKind = ConstraintKind.MARTINGALE_BALL

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        if len(times) != len(self.marginals) or len(times) < 2:
            raise ValidationError("need one marginal per time and at least two times")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("times must be strictly increasing")
        kind = ConstraintKind.parse(self.kind)
        radii = tuple(self.radii)
        if kind is ConstraintKind.MARTINGALE_BALL and len(radii) != len(times) - 1:
            raise ValidationError(f"need {len(times) - 1} radii")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "kind", kind)

    @classmethod
    def from_marginals(cls, marginals, radii=None, kind=ConstraintKind.MARTINGALE_BALL):
        return cls(tuple(range(len(marginals))), tuple(marginals), tuple(radii or ()), kind)

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    def constraint(self, i: int) -> ConstraintSpec:
        """``Gamma_i`` with candidate targets the support of ``alpha_{i+1}``."""
        targets = self.marginals[i + 1].atoms
        if self.kind is ConstraintKind.MARTINGALE_BALL:
            return ConstraintSpec.martingale_ball(self.radii[i], targets)
        return ConstraintSpec(self.kind, targets=targets)


@dataclass(frozen=True, eq=False)
class PathMeasure:
    """Initial law plus one stochastic matrix per step.

    ``kernels[t][i, j]`` is the probability of moving from ``grids[t][i]`` to
    ``grids[t + 1][j]``.
    """

    initial: DiscreteMeasure
    grids: tuple[np.ndarray, ...]
    kernels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.grids) != len(self.kernels) + 1:
            raise ValidationError("need one more grid than kernels")
        for t, K in enumerate(self.kernels):
            if K.shape != (self.grids[t].shape[0], self.grids[t + 1].shape[0]):
                raise ValidationError(f"kernel {t} has shape {K.shape}")
            if np.any(K < -1e-12) or np.any(np.abs(K.sum(axis=1) - 1) > 1e-9):
                raise ValidationError(f"kernel {t} rows are not probability vectors")
        if not np.array_equal(as_points(self.grids[0]), self.initial.points):
            raise ValidationError("first grid must be the initial support")

    @property
    def n_steps(self) -> int:
        return len(self.kernels)

    def marginal_weights(self, t: int) -> np.ndarray:
        w = self.initial.weights
        for K in self.kernels[:t]:
            w = w @ K
        return w

    def marginals(self) -> list[np.ndarray]:
        out = [self.initial.weights]
        for K in self.kernels:
            out.append(out[-1] @ K)
        return out

    def concat(self, other: "PathMeasure") -> "PathMeasure":
        """Continue this path with ``other`` (its start must be our end law)."""
        end = self.marginal_weights(self.n_steps)
        keep = end > MASS_FLOOR
        if not np.array_equal(as_points(self.grids[-1][keep]), other.initial.points) or (
            np.abs(end[keep] - other.initial.weights).max() > 1e-10
        ):
            raise MarginalMismatch("end law of the first path is not the start of the second")
        last = self.kernels[-1][:, keep]
        last = last / last.sum(axis=1, keepdims=True)
        grids = self.grids[:-1] + (self.grids[-1][keep],) + other.grids[1:]
        return PathMeasure(self.initial, grids, self.kernels[:-1] + (last,) + other.kernels)

    def to_dict(self) -> dict:
        return {
            "initial": {"atoms": self.initial.atoms.tolist(), "weights": self.initial.weights.tolist()},
            "grids": [g.tolist() for g in self.grids],
            "kernels": [K.tolist() for K in self.kernels],
        }


@dataclass(eq=False)
class MultimarginalReport:
    feasible: bool
    intervals: list[FeasibilityReport]
    failed: list[int] = field(default_factory=list)

    def witnesses(self) -> list[Coupling]:
        return [r.witness for r in self.intervals]


def check_multimarginal(curve: MarginalCurve, map_fn: Callable = map) -> MultimarginalReport:
    """Feasible iff every consecutive pair is feasible under its constraint.

    Intervals are independent; ``map_fn`` may run them concurrently.
    """
    idx = range(curve.n_intervals)
    reps = list(map_fn(lambda i: check_feasibility(curve.marginals[i], curve.marginals[i + 1], curve.constraint(i)), idx))
    failed = [i for i, r in enumerate(reps) if not r.feasible]
    return MultimarginalReport(not failed, reps, failed)


def _row_kernels(c: Coupling) -> np.ndarray:
    P = c.matrix
    return P / P.sum(axis=1, keepdims=True)


def paste(witnesses: Sequence[Coupling], tol: float = 1e-10) -> PathMeasure:
    """Glue per-interval couplings into one path measure.

    The target law of witness ``i`` (restricted to atoms carrying mass) must
    equal the source law of witness ``i + 1``.
    """
    if not witnesses:
        raise ValidationError("nothing to paste")
    grids = [witnesses[0].source.atoms]
    kernels = []
    for t, w in enumerate(witnesses):
        col = w.target_weights()
        keep = col > MASS_FLOOR
        if t + 1 < len(witnesses):
            nxt = witnesses[t + 1].source
            if not np.array_equal(as_points(w.target_support[keep]), nxt.points):
                raise MarginalMismatch(f"witness {t} ends on different atoms than witness {t + 1} starts")
            err = np.abs(col[keep] - nxt.weights).max()
            if err > tol:
                raise MarginalMismatch(f"witness {t} target law differs from witness {t + 1} source by {err:.3g}")
        K = _row_kernels(w)[:, keep]
        kernels.append(K / K.sum(axis=1, keepdims=True))
        grids.append(w.target_support[keep])
    src = witnesses[0].source
    return PathMeasure(src, tuple(np.asarray(g) for g in grids), tuple(kernels))


def verify_marginals(path: PathMeasure, curve: MarginalCurve, tol: float = 1e-10) -> bool:
    """Push the initial law through the kernels and compare with every ``alpha_i``."""
    if path.n_steps != curve.n_intervals:
        return False
    for t, w in enumerate(path.marginals()):
        target = curve.marginals[t]
        try:
            expected = target_weights_on(path.grids[t], target)
        except ValidationError:
            return False
        if np.abs(w - expected).max() > tol:
            return False
    return True


def kernel_violations(path: PathMeasure, curve: MarginalCurve, tol: float = 1e-9) -> list[str]:
    """Rows of the path's kernels that leave their step constraint."""
    out = []
    for t, K in enumerate(path.kernels):
        cons = curve.constraint(t).with_targets(path.grids[t + 1])
        for i, x in enumerate(path.grids[t]):
            why = cons.kernel_violation(x, path.grids[t + 1], K[i], tol)
            if why:
                out.append(f"step {t} row {i}: {why}")
    return out


@dataclass(eq=False)
class PathProblemResult:
    feasible: bool
    grids: tuple[np.ndarray, ...]
    stages: list[np.ndarray] | None = None
    farkas_final: np.ndarray | None = None

    def witnesses(self) -> list[Coupling]:
        mass = [self.stages[0].sum(axis=1)] + [S.sum(axis=0) for S in self.stages]
        keep = [m > MASS_FLOOR for m in mass]
        out = []
        for t, S in enumerate(self.stages):
            sub = S[keep[t]][:, keep[t + 1]]
            src = DiscreteMeasure(self.grids[t][keep[t]], sub.sum(axis=1))
            out.append(Coupling(src, self.grids[t + 1][keep[t + 1]], sub))
        return out


def solve_path_problem(
    grids: Sequence,
    radii: Sequence,
    fixed: dict[int, np.ndarray],
    kind: ConstraintKind | str = ConstraintKind.MARTINGALE_BALL,
) -> PathProblemResult:
    """Single LP for a martingale on ``grids`` with steps bounded by ``radii``.

    ``fixed[t]`` pins the law at time ``t`` (weights aligned with
    ``grids[t]``); times 0 and ``n`` must be pinned. Intermediate laws that
    are not pinned are free. One-dimensional grids.
    """
    kind = ConstraintKind.parse(kind)
    grids = tuple(np.asarray(g, dtype=float) for g in grids)
    n = len(grids) - 1
    if 0 not in fixed or n not in fixed:
        raise ValidationError("initial and final laws must be fixed")
    sizes = [g.shape[0] for g in grids]
    cells = []
    for t in range(n):
        cons = ConstraintSpec(kind, radius=radii[t], targets=grids[t + 1]) if kind is ConstraintKind.MARTINGALE_BALL \
            else ConstraintSpec(kind, targets=grids[t + 1])
        adm = np.array([cons.admissible_mask(x, grids[t + 1]) for x in grids[t]]).reshape(sizes[t], sizes[t + 1])
        cells.append(np.argwhere(adm))
    offsets = np.cumsum([0] + [c.shape[0] for c in cells])
    nvar = int(offsets[-1])
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    final_rows = []

    def new_row():
        r = np.zeros(nvar)
        rows.append(r)
        return r

    for t in range(n + 1):
        for k in range(sizes[t]):
            out_cols = [] if t == n else offsets[t] + np.flatnonzero(cells[t][:, 0] == k)
            in_cols = [] if t == 0 else offsets[t - 1] + np.flatnonzero(cells[t - 1][:, 1] == k)
            if t in fixed:
                cols = out_cols if t < n else in_cols
                r = new_row()
                r[cols] = 1.0
                rhs.append(float(fixed[t][k]))
                if t == n:
                    final_rows.append(len(rows) - 1)
                if 0 < t < n:
                    r = new_row()
                    r[in_cols] = 1.0
                    rhs.append(float(fixed[t][k]))
            else:
                r = new_row()
                r[in_cols] = 1.0
                r[out_cols] = -1.0
                rhs.append(0.0)
    if kind is not ConstraintKind.UNCONSTRAINED:
        for t in range(n):
            for k in range(sizes[t]):
                sel = np.flatnonzero(cells[t][:, 0] == k)
                r = new_row()
                r[offsets[t] + sel] = grids[t + 1][cells[t][sel, 1]] - grids[t][k]
                rhs.append(0.0)
    A = np.vstack(rows) if rows else np.zeros((0, nvar))
    out = solve_lp(LinearProgram(np.zeros(nvar), A, np.asarray(rhs)))
    if not out.optimal:
        return PathProblemResult(False, grids, farkas_final=out.farkas[final_rows])
    stages = []
    for t in range(n):
        S = np.zeros((sizes[t], sizes[t + 1]))
        S[cells[t][:, 0], cells[t][:, 1]] = out.x[offsets[t]:offsets[t + 1]]
        stages.append(S)
    return PathProblemResult(True, grids, stages)


@dataclass(eq=False)
class SkorokhodReport:
    """Discrete-time analogue of an embedding with bounded quadratic variation.

    Per-step increments are bounded by ``radius = kappa * sqrt(sigma / n)``;
    this is an analogue of the continuous statement, not an approximation
    with an error bound.
    """

    feasible: bool
    step: float
    radius: float
    grids: tuple[np.ndarray, ...]
    path: PathMeasure | None = None
    violating_function: np.ndarray | None = None
    gap: float | None = None
    notes: list[str] = field(default_factory=list)


def _lattice_grids(alpha, beta, n, step, radius, kappa, cap):
    kmax = int(math.floor(n * kappa + 1e-12))
    ks = np.arange(-kmax, kmax + 1)
    grids = [alpha.atoms]
    total = len(alpha) + len(beta)
    for t in range(1, n):
        pts = np.unique((alpha.atoms[:, None] + ks[None, :] * step).ravel())
        reach = np.min(np.abs(pts[:, None] - alpha.atoms[None, :]), axis=1) <= t * radius + 1e-12
        back = np.min(np.abs(pts[:, None] - beta.atoms[None, :]), axis=1) <= (n - t) * radius + 1e-12
        g = pts[reach & back]
        total += g.size
        if total > cap:
            raise GridOverflow(f"path grid exceeds {cap} points")
        grids.append(g)
    grids.append(beta.atoms)
    return grids


def skorokhod_discrete(
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    sigma: float,
    n_steps: int,
    kappa: float = 3.0,
    cap: int = 10_000,
) -> SkorokhodReport:
    """Is there an ``n_steps`` martingale from ``alpha`` to ``beta`` with small steps?

    Intermediate states live on the lattice ``atoms(alpha) + k * step``,
    ``step = sqrt(sigma / n_steps)``, pruned to points reachable from
    ``alpha`` and able to reach ``beta`` in the remaining steps. Infeasible
    answers come with a payoff ``f`` on ``supp(beta)`` whose multi-step
    lower value exceeds ``beta(f)``.
    """
    if alpha.dim != 1 or beta.dim != 1:
        raise ValidationError("one-dimensional measures only")
    if not sigma > 0 or n_steps < 1:
        raise ValidationError("need sigma > 0 and at least one step")
    step = math.sqrt(sigma / n_steps)
    radius = kappa * step
    grids = _lattice_grids(alpha, beta, n_steps, step, radius, kappa, cap)
    notes = [f"discrete analogue: {n_steps} steps, increment bound {radius:.6g}"]
    if any(g.size == 0 for g in grids):
        f = np.zeros(len(beta))
        return SkorokhodReport(False, step, radius, tuple(grids), violating_function=f, gap=math.inf,
                               notes=notes + ["no lattice path connects the supports"])
    radii = [radius] * n_steps
    res = solve_path_problem(grids, radii, {0: alpha.weights, n_steps: beta.weights})
    if res.feasible:
        path = paste(res.witnesses())
        return SkorokhodReport(True, step, radius, res.grids, path=path, notes=notes)
    f = -res.farkas_final
    env = f_gamma_multiperiod(f, res.grids, radii)
    g0 = env.g0
    gap = math.inf if np.any(np.isinf(g0)) else float(alpha.weights @ g0 - beta.weights @ f)
    return SkorokhodReport(False, step, radius, res.grids, violating_function=f, gap=gap, notes=notes)
