"""Execute a scenario and collect a :class:`~cmot.io.RunReport`."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .capacity import check_extremality, solve_capacity
from .envelope import f_gamma_multiperiod
from .errors import InfeasibleInstance, ValidationError
from .feasibility import FeasibilityReport, check_feasibility
from .io import RunReport, Scenario, plan_certificate, radius_value
from .measures import ConstraintKind, Coupling
from .monotone import all_pairs_competitor_check, check_gamma_left_monotone, uniqueness_probe
from .multiperiod import PathMeasure, check_multimarginal, paste, skorokhod_discrete, verify_marginals
from .transport import solve

__all__ = ["RunResult", "run_scenario", "COMMANDS"]

COMMANDS = ("feasibility", "solve", "dual", "envelope", "multiperiod", "skorokhod", "capacity", "check-monotone")
DEFAULT_TOL = 1e-9


@dataclass(eq=False)
class RunResult:
    report: RunReport
    plan: Coupling | None = None
    path: PathMeasure | None = None
    exit_code: int = 0


def _infeasible_certificate(rep: FeasibilityReport) -> dict:
    return {"targets": rep.targets, "violating_function": rep.violating_function}


def _feasibility(sc: Scenario, tol, seed, overrides):
    rep = check_feasibility(sc.alpha(), sc.beta(), sc.constraint(), tol)
    values = {"feasible": rep.feasible, "marginal": rep.marginal}
    if rep.feasible:
        return "feasible", values, {"plan": plan_certificate(rep.witness)}, rep.witness, None
    values["gap"] = rep.gap
    return "infeasible", values, _infeasible_certificate(rep), None, None


def _solve(sc: Scenario, tol, seed, overrides, dual=None):
    dual = bool(overrides.get("dual")) if dual is None else dual
    alpha, beta, cons, cost = sc.alpha(), sc.beta(), sc.constraint(), sc.cost()
    try:
        rep = solve(alpha, beta, cons, cost, dual=dual, tol=tol)
    except InfeasibleInstance as exc:
        return "infeasible", {"feasible": False, "gap": exc.report.gap}, _infeasible_certificate(exc.report), None, None
    values = {"primal_value": rep.primal_value, "dual_degenerate": not rep.unique}
    cert = {"plan": plan_certificate(rep.coupling, 0.0), "targets": rep.targets}
    if dual:
        values.update(dual_value=rep.dual_value, duality_gap=rep.gap)
        cert.update(phi=rep.phi, f_dual=rep.f_dual)
    return "solved", values, cert, rep.coupling, None


def _envelope(sc: Scenario, tol, seed, overrides):
    e = sc.data["envelope"]
    payoff = overrides.get("payoff", e["payoff"])
    grids = [np.asarray(g, dtype=float) for g in e["grids"]]
    radii = [radius_value(r) for r in e.get("radii", [])] or [None] * (len(grids) - 1)
    env = f_gamma_multiperiod(np.asarray(payoff, dtype=float), grids, radii, e.get("kind", "martingale_ball"))
    return "computed", {"steps": len(grids) - 1}, {"grid": grids[0], "g0": env.g0}, None, None


def _multiperiod(sc: Scenario, tol, seed, overrides):
    curve = sc.curve()
    rep = check_multimarginal(curve)
    values = {"feasible": rep.feasible, "failed_intervals": rep.failed}
    if not rep.feasible:
        cert = {"intervals": [
            {"interval": i, "gap": r.gap, "targets": r.targets, "violating_function": r.violating_function}
            for i, r in enumerate(rep.intervals) if not r.feasible
        ]}
        values["gap"] = max(rep.intervals[i].gap for i in rep.failed)
        return "infeasible", values, cert, None, None
    path = paste(rep.witnesses())
    values["marginals_verified"] = verify_marginals(path, curve)
    return "feasible", values, {"path": path.to_dict()}, None, path


def _skorokhod(sc: Scenario, tol, seed, overrides):
    cfg = dict(sc.data.get("skorokhod", {}))
    for key in ("sigma", "steps", "kappa"):
        if overrides.get(key) is not None:
            cfg[key] = overrides[key]
    cfg.setdefault("kappa", sc.options.get("kappa", 3.0))
    if "sigma" not in cfg or "steps" not in cfg:
        raise ValidationError("skorokhod needs sigma and steps")
    rep = skorokhod_discrete(sc.alpha(), sc.beta(), float(cfg["sigma"]), int(cfg["steps"]),
                             float(cfg["kappa"]), int(cfg.get("cap", 10_000)))
    values = {"feasible": rep.feasible, "step": rep.step, "radius": rep.radius,
              "grid_points": int(sum(g.size for g in rep.grids)), "notes": rep.notes}
    if rep.feasible:
        return "feasible", values, {"path": rep.path.to_dict()}, None, rep.path
    values["gap"] = rep.gap
    cert = {"targets": sc.beta().atoms, "violating_function": rep.violating_function}
    return "infeasible", values, cert, None, None


def _capacity(sc: Scenario, tol, seed, overrides):
    inst = sc.capacity_instance()
    try:
        rep = solve_capacity(inst, dual=True, tol=tol)
    except InfeasibleInstance as exc:
        return "infeasible", {"feasible": False, "gap": exc.report.gap}, _infeasible_certificate(exc.report), None, None
    ext = check_extremality(inst, rep.coupling, tie=not rep.unique)
    values = {
        "primal_value": rep.primal_value, "dual_value": rep.dual_value, "duality_gap": rep.gap,
        "extreme": ext.extreme, "interior_mass": ext.interior_mass, "tie": ext.tie,
    }
    cert = {"plan": plan_certificate(rep.coupling), "saturated": ext.W, "interior": ext.interior}
    return "solved", values, cert, rep.coupling, None


def _monotone(sc: Scenario, tol, seed, overrides):
    alpha, beta, cons, cost = sc.alpha(), sc.beta(), sc.constraint(), sc.cost()
    plan = overrides.get("plan")
    plan = sc.plan() if plan is None else plan
    if plan is None:
        plan = solve(alpha, beta, cons, cost, dual=False, tol=tol).coupling
    values: dict = {}
    cert: dict = {"plan": plan_certificate(plan)}
    passes = True
    if alpha.dim == 1 and cons.kind in (ConstraintKind.MARTINGALE_BALL, ConstraintKind.MARTINGALE):
        tri = check_gamma_left_monotone(plan, constraint=cons, cost=cost)
        values["left_monotone"] = tri.passes
        values["guaranteed"] = tri.guaranteed
        if tri.violation:
            cert["left_monotone_violation"] = tri.violation
        passes &= tri.passes
    comp = all_pairs_competitor_check(plan, cons, cost)
    values["competitor_check"] = comp.passes
    if comp.violation:
        cert["competitor_violation"] = comp.violation
    passes &= comp.passes
    if len(alpha) == 2:
        uq = uniqueness_probe(alpha, beta, cons, cost, seed=seed)
        values["unique_optimizer"] = uq.unique
    return ("passes" if passes else "fails"), values, cert, plan, None


_HANDLERS = {
    "feasibility": _feasibility,
    "solve": _solve,
    "dual": lambda *a: _solve(*a, dual=True),
    "envelope": _envelope,
    "multiperiod": _multiperiod,
    "skorokhod": _skorokhod,
    "capacity": _capacity,
    "check-monotone": _monotone,
}

_DEFAULT_COMMAND = {"monotone": "check-monotone"}
_KIND_OF_COMMAND = {"check-monotone": "monotone"}


def run_scenario(sc: Scenario, command: str | None = None, tol: float | None = None,
                 seed: int | None = None, **overrides) -> RunResult:
    """Run ``command`` (default: the scenario's own kind) on ``sc``.

    Exit codes follow the CLI: 0 for solved or feasible, 2 when the verdict
    is negative and carries a certificate (infeasible instance, monotonicity
    violation).
    """
    command = command or _DEFAULT_COMMAND.get(sc.kind, sc.kind)
    if command not in _HANDLERS:
        raise ValidationError(f"unknown command {command!r}")
    sc.require(_KIND_OF_COMMAND.get(command, command))
    tol = sc.options.get("tol", DEFAULT_TOL) if tol is None else tol
    seed = sc.options.get("seed", 0) if seed is None else seed
    start = time.perf_counter()
    status, values, cert, plan, path = _HANDLERS[command](sc, tol, seed, overrides)
    elapsed = time.perf_counter() - start
    report = RunReport(sc.digest, command, status, values, cert, sc.warnings, {"seconds": elapsed})
    code = 2 if status in ("infeasible", "fails") else 0
    return RunResult(report, plan, path, code)
