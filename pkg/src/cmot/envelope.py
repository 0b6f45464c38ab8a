"""Lower values ``inf_{Q in Gamma(x)} E^Q[f]`` over finitely many targets.

For martingale constraints in one dimension this is the lower convex
envelope of ``f`` restricted to the admissible targets, evaluated at ``x``;
it is computed with a monotone-chain scan. Higher dimensions and the
``method="lp"`` oracle path solve the barycentre LP instead.

An empty admissible set is reported as ``value = inf`` together with
``empty = True``; infinite values never enter LP data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .lp import LinearProgram, solve_lp
from .measures import (
    ConstraintKind,
    ConstraintSpec,
    CostSpec,
    DiscreteMeasure,
    as_points,
    single,
)

__all__ = [
    "EnvelopeResult",
    "MultiperiodEnvelope",
    "f_gamma",
    "f_gamma_batch",
    "f_gamma_multiperiod",
    "r_c_gamma",
    "convex_order_potential",
    "lower_hull",
]

HULL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """Optimal value and an attaining kernel.

    ``kernel`` is a probability vector aligned with ``targets`` (all zeros
    when ``empty``). ``active`` lists the indices it charges.
    """

    value: float
    kernel: np.ndarray
    targets: np.ndarray
    active: tuple[int, ...]
    empty: bool = False

    @property
    def finite(self) -> bool:
        return not self.empty

    @property
    def kernel_measure(self) -> DiscreteMeasure | None:
        if self.empty:
            return None
        idx = list(self.active)
        return DiscreteMeasure(self.targets[idx], self.kernel[idx])


def _empty(Y: np.ndarray) -> EnvelopeResult:
    return EnvelopeResult(math.inf, np.zeros(Y.shape[0]), Y, (), True)


def _result(Y, f, weights: dict[int, float]) -> EnvelopeResult:
    q = np.zeros(Y.shape[0])
    for j, w in weights.items():
        q[j] += w
    active = tuple(sorted(j for j in weights if q[j] > 0))
    value = float(sum(q[j] * f[j] for j in active))
    return EnvelopeResult(value, q, Y, active, False)


def lower_hull(ys: np.ndarray, fs: np.ndarray) -> list[int]:
    """Indices (into the inputs) of the lower convex hull vertices, left to right.

    Collinear interior points are dropped; among equal abscissae the lowest
    ordinate is kept.
    """
    order = np.lexsort((fs, ys))
    hull: list[int] = []
    for k in order:
        if hull and ys[hull[-1]] == ys[k]:
            continue  # same abscissa, higher or equal ordinate
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (ys[a] - ys[o]) * (fs[k] - fs[o]) - (fs[a] - fs[o]) * (ys[k] - ys[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(int(k))
    return hull


def _hull_envelope(Y1: np.ndarray, f: np.ndarray, cand: np.ndarray, x: float) -> dict[int, float] | None:
    ys, fs = Y1[cand], f[cand]
    lo, hi = ys.min(), ys.max()
    if x < lo - HULL_TOL or x > hi + HULL_TOL:
        return None
    hull = lower_hull(ys, fs)
    hx = ys[hull]
    # leftmost vertex at or right of x
    k = int(np.searchsorted(hx, x - HULL_TOL, side="left"))
    k = min(k, len(hull) - 1)
    if abs(hx[k] - x) <= HULL_TOL:
        return {int(cand[hull[k]]): 1.0}
    left, right = hull[k - 1], hull[k]
    lam = (ys[right] - x) / (ys[right] - ys[left])
    return {int(cand[left]): float(lam), int(cand[right]): float(1.0 - lam)}


def _lp_envelope(Yp: np.ndarray, f: np.ndarray, cand: np.ndarray, x, martingale: bool) -> dict[int, float] | None:
    pts = Yp[cand]
    rows = [np.ones(cand.size)]
    rhs = [1.0]
    if martingale:
        xp = as_points(single(x)).ravel()
        rows.extend(pts.T)
        rhs.extend(xp)
    out = solve_lp(LinearProgram(f[cand], np.vstack(rows), np.asarray(rhs)))
    if not out.optimal:
        return None
    lam = np.clip(out.x, 0.0, None)
    lam /= lam.sum()
    return {int(cand[i]): float(lam[i]) for i in np.flatnonzero(lam > 0)}


def _capacity_envelope(f, cand, caps) -> dict[int, float] | None:
    if caps[cand].sum() < 1.0 - 1e-12:
        return None
    order = cand[np.argsort(f[cand], kind="stable")]
    left = 1.0
    weights: dict[int, float] = {}
    for j in order:
        take = min(caps[j], left)
        if take > 0:
            weights[int(j)] = float(take)
            left -= take
        if left <= 1e-15:
            break
    total = sum(weights.values())
    return {j: w / total for j, w in weights.items()}


def f_gamma(
    f,
    x,
    constraint: ConstraintSpec,
    targets=None,
    method: str = "auto",
) -> EnvelopeResult:
    """Lower value of payoff ``f`` from source point ``x`` under ``constraint``.

    Parameters
    ----------
    f : array-like
        Payoff values aligned with the candidate targets. Infinite entries
        mark targets no admissible kernel may charge.
    x : float or array-like
        Source point.
    constraint : ConstraintSpec
    targets : array-like, optional
        Candidate targets; defaults to ``constraint.targets``.
    method : {"auto", "hull", "lp"}
        ``"lp"`` forces the barycentre LP (the independent oracle path).
    """
    Y = np.asarray(constraint.candidate_targets() if targets is None else targets, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    if f.size != Y.shape[0]:
        raise ValueError(f"payoff has {f.size} values for {Y.shape[0]} targets")
    mask = constraint.admissible_mask(x, Y) & (f < math.inf)
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        return _empty(Y)
    kind = constraint.kind
    if kind is ConstraintKind.UNCONSTRAINED:
        j = int(cand[np.argmin(f[cand])])
        return _result(Y, f, {j: 1.0})
    if kind is ConstraintKind.CAPACITY:
        caps = constraint.cell_caps(x, Y)
        w = _capacity_envelope(f, cand, caps)
        return _empty(Y) if w is None else _result(Y, f, w)
    Yp = as_points(Y)
    one_d = Yp.shape[1] == 1
    if method == "hull" and not one_d:
        raise ValueError("hull method is one-dimensional")
    if method == "lp" or not one_d:
        w = _lp_envelope(Yp, f, cand, x, martingale=True)
    else:
        w = _hull_envelope(Yp[:, 0], f, cand, float(np.asarray(x, dtype=float).ravel()[0]))
    return _empty(Y) if w is None else _result(Y, f, w)


def f_gamma_batch(
    f,
    xs: Iterable,
    constraint: ConstraintSpec,
    targets=None,
    map_fn: Callable = map,
) -> list[EnvelopeResult]:
    """Evaluate :func:`f_gamma` at many source points.

    Evaluations are independent, so ``map_fn`` may be an executor's ``map``.
    """
    return list(map_fn(lambda x: f_gamma(f, x, constraint, targets), list(xs)))


def r_c_gamma(
    phi,
    x,
    cost: CostSpec,
    constraint: ConstraintSpec,
    targets=None,
    method: str = "auto",
) -> EnvelopeResult:
    """``inf_{Q in Gamma(x)} E^Q[phi + C(x, .)]`` for a linear cost."""
    Y = np.asarray(constraint.candidate_targets() if targets is None else targets, dtype=float)
    return f_gamma(np.asarray(phi, dtype=float) + cost.row(x, Y), x, constraint, Y, method)


@dataclass(frozen=True, eq=False)
class MultiperiodEnvelope:
    """Backward recursion values ``g_0, ..., g_N`` on their grids."""

    grids: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]

    @property
    def g0(self) -> np.ndarray:
        return self.values[0]

    def empty(self, n: int) -> np.ndarray:
        return ~np.isfinite(self.values[n])


def _stage_constraint(kind: ConstraintKind, radius, grid: np.ndarray, nxt: np.ndarray) -> ConstraintSpec:
    if kind is ConstraintKind.MARTINGALE_BALL:
        if isinstance(radius, Mapping) or np.ndim(radius) == 0:
            r = radius
        else:
            r = dict(zip(np.asarray(grid, dtype=float).tolist(), np.asarray(radius, dtype=float).tolist()))
        return ConstraintSpec(kind, radius=r, targets=nxt)
    return ConstraintSpec(kind, targets=nxt)


def f_gamma_multiperiod(
    f,
    grids: Sequence,
    radii: Sequence | None = None,
    kind: ConstraintKind | str = ConstraintKind.MARTINGALE_BALL,
) -> MultiperiodEnvelope:
    """Backward recursion ``g_N = f``, ``g_{n-1}(x) = f_gamma(g_n, x)`` on ``X_n``.

    ``radii[n]`` is a number or a table over ``grids[n]`` bounding the step
    from time ``n`` to ``n + 1``. Points of ``grids[n]`` from which no
    admissible kernel reaches a finite value of ``g_{n+1}`` get ``inf``.
    """
    kind = ConstraintKind.parse(kind)
    grids = tuple(np.asarray(g, dtype=float) for g in grids)
    N = len(grids) - 1
    if N < 1:
        raise ValueError("need at least two grids")
    if kind is ConstraintKind.MARTINGALE_BALL and (radii is None or len(radii) != N):
        raise ValueError(f"need {N} radii")
    g = [None] * (N + 1)
    g[N] = np.asarray(f, dtype=float).ravel()
    if g[N].size != grids[N].shape[0]:
        raise ValueError("payoff does not match the final grid")
    for n in range(N - 1, -1, -1):
        cons = _stage_constraint(kind, radii[n] if radii is not None else None, grids[n], grids[n + 1])
        g[n] = np.array([f_gamma(g[n + 1], x, cons).value for x in grids[n]])
    return MultiperiodEnvelope(grids, tuple(g))


def convex_order_potential(mu: DiscreteMeasure, y):
    """Potential ``u(y) = sum_z |y - z| mu(z)``; vectorised over ``y``."""
    y_arr = np.asarray(y, dtype=float)
    vals = np.abs(y_arr[..., None] - mu.atoms) @ mu.weights
    return float(vals) if y_arr.ndim == 0 else vals
