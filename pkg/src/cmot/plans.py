"""LP formulation of constrained couplings ``Pi_Gamma(alpha, beta)``.

Variables are the admissible cells ``(i, j)``; rows are, in order, the
source marginals, the target marginals on the candidate set ``Y`` and, for
martingale constraints, ``d`` barycentre rows per source atom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TargetsOutsideCandidates
from .lp import LinearProgram
from .measures import (
    ConstraintKind,
    ConstraintSpec,
    Coupling,
    CostSpec,
    DiscreteMeasure,
    as_points,
    single,
)


def target_weights_on(Y: np.ndarray, beta: DiscreteMeasure) -> np.ndarray:
    """``beta`` as a weight vector on candidate set ``Y``."""
    Yp, Bp = as_points(Y), beta.points
    w = np.zeros(Yp.shape[0])
    for k, p in enumerate(Bp):
        hits = np.flatnonzero(np.all(Yp == p, axis=1))
        if hits.size == 0:
            raise TargetsOutsideCandidates(f"target atom {p.tolist()} is not a candidate target")
        w[hits[0]] += beta.weights[k]
    return w


@dataclass(frozen=True, eq=False)
class PlanProblem:
    alpha: DiscreteMeasure
    beta: DiscreteMeasure
    constraint: ConstraintSpec
    targets: np.ndarray
    beta_on_targets: np.ndarray
    cells: np.ndarray  # (k, 2) int
    admissible: np.ndarray  # (n, m) bool
    cost_matrix: np.ndarray | None
    lp: LinearProgram

    @property
    def n_src(self) -> int:
        return len(self.alpha)

    @property
    def n_tgt(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return as_points(self.targets).shape[1]

    def to_matrix(self, x: np.ndarray) -> np.ndarray:
        P = np.zeros((self.n_src, self.n_tgt))
        P[self.cells[:, 0], self.cells[:, 1]] = x
        return P

    def to_coupling(self, x: np.ndarray) -> Coupling:
        P = self.to_matrix(x)
        P[P < 1e-14] = 0.0
        # absorb rounding so the row-sum invariant holds exactly enough
        rows = P.sum(axis=1)
        scale = np.divide(self.alpha.weights, rows, out=np.ones_like(rows), where=rows > 0)
        return Coupling(self.alpha, self.targets, P * scale[:, None])

    def split_duals(self, y: np.ndarray):
        """Split a row vector into source, target and barycentre parts."""
        n, m = self.n_src, self.n_tgt
        u = y[:n]
        v = y[n:n + m]
        w = y[n + m:].reshape(n, -1) if self.constraint.is_martingale else np.zeros((n, 0))
        return u, v, w

    def caps(self) -> np.ndarray:
        return self.lp.hi


def build_plan_problem(
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    cost: CostSpec | None = None,
) -> PlanProblem:
    Y = np.asarray(constraint.candidate_targets(beta), dtype=float)
    bw = target_weights_on(Y, beta)
    n, m = len(alpha), Y.shape[0]
    adm = np.zeros((n, m), dtype=bool)
    for i, x in enumerate(alpha.atoms):
        adm[i] = constraint.admissible_mask(x, Y)
    cells = np.argwhere(adm)
    k = cells.shape[0]
    Yp, Xp = as_points(Y), alpha.points
    d = Yp.shape[1]
    mart = constraint.is_martingale
    rows = n + m + (n * d if mart else 0)
    A = np.zeros((rows, k))
    col = np.arange(k)
    A[cells[:, 0], col] = 1.0
    A[n + cells[:, 1], col] = 1.0
    if mart:
        delta = Yp[cells[:, 1]] - Xp[cells[:, 0]]
        for a in range(d):
            A[n + m + cells[:, 0] * d + a, col] = delta[:, a]
    b = np.concatenate([alpha.weights, bw, np.zeros(rows - n - m)])
    hi = np.full(k, np.inf)
    if constraint.kind is ConstraintKind.CAPACITY:
        for i, x in enumerate(alpha.atoms):
            sel = cells[:, 0] == i
            caps = constraint.cell_caps(x, Y)
            hi[sel] = alpha.weights[i] * caps[cells[sel, 1]]
    C = None
    c = np.zeros(k)
    if cost is not None:
        C = cost.matrix(alpha.atoms, Y)
        c = C[cells[:, 0], cells[:, 1]]
    lp = LinearProgram(c, A, b, hi=hi)
    return PlanProblem(alpha, beta, constraint, Y, bw, cells, adm, C, lp)


def plan_violations(
    coupling: Coupling,
    alpha: DiscreteMeasure,
    beta: DiscreteMeasure,
    constraint: ConstraintSpec,
    tol: float = 1e-9,
) -> list[str]:
    """Independent check that ``coupling`` lies in ``Pi_Gamma(alpha, beta)``."""
    out = []
    P = coupling.matrix
    if as_points(coupling.source.atoms).shape != alpha.points.shape or not np.array_equal(
        coupling.source.points, alpha.points
    ):
        return ["source atoms differ from alpha"]
    if np.any(P < -tol):
        out.append("negative mass")
    err = np.abs(P.sum(axis=1) - alpha.weights).max()
    if err > tol:
        out.append(f"source marginal off by {err:.3g}")
    try:
        bw = target_weights_on(coupling.target_support, beta)
    except TargetsOutsideCandidates as exc:
        return out + [str(exc)]
    err = np.abs(P.sum(axis=0) - bw).max()
    if err > tol:
        out.append(f"target marginal off by {err:.3g}")
    Y = coupling.target_support
    Yp = coupling.target_points
    for i, x in enumerate(alpha.atoms):
        row = P[i]
        mass = row.sum()
        if mass <= 0:
            continue
        mask = constraint.admissible_mask(x, Y)
        if row[~mask].max(initial=0.0) > tol:
            out.append(f"row {i}: mass outside the admissible set")
        if constraint.is_martingale:
            resid = np.abs(row @ Yp - mass * as_points(single(x)).ravel()).max()
            if resid > tol:
                out.append(f"row {i}: barycenter off by {resid:.3g}")
        if constraint.kind is ConstraintKind.CAPACITY:
            caps = alpha.weights[i] * constraint.cell_caps(x, Y)
            if np.any(row > caps + tol * np.maximum(1.0, np.where(np.isfinite(caps), caps, 1.0))):
                out.append(f"row {i}: capacity exceeded")
    return out
