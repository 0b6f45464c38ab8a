import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmot import ConstraintSpec, CostSpec, Coupling, f_gamma, measure, solve, solve_primal
from cmot.errors import InfeasibleInstance
from cmot.transport import dual_objective, dual_pair_slack, evaluate_plan

import oracles
from instances import feasible_ball_instance

ALPHA = measure([0.0, 5.0])
BETA = measure([-2.0, 0.0, 2.0, 10.0])
Y = BETA.atoms
BALL_PLAN = Coupling(ALPHA, Y, np.array([[0.25, 0, 0.25, 0], [0, 0.25, 0, 0.25]]))
LEFT_CURTAIN = Coupling(ALPHA, Y, np.array([[1, 2, 1, 0], [1, 0, 1, 2]]) / 8)
EXP = CostSpec.difference("exp")


def test_ball_example_value_is_sum_over_plan():
    rep = solve(ALPHA, BETA, ConstraintSpec.martingale_ball(6.0), EXP)
    expected = 0.25 * (math.exp(-2) + math.exp(2) + math.exp(-5) + math.exp(5))
    assert rep.primal_value == pytest.approx(expected, rel=1e-12)
    assert abs(rep.dual_value - rep.primal_value) <= 1e-7
    assert np.abs(rep.coupling.matrix - BALL_PLAN.matrix).max() <= 1e-8


def test_left_curtain_is_martingale_optimum():
    rep = solve(ALPHA, BETA, ConstraintSpec.martingale(), EXP)
    assert np.abs(rep.coupling.matrix - LEFT_CURTAIN.matrix).max() <= 1e-8
    assert rep.gap <= 1e-7


def test_single_admissible_plan():
    d = measure([0.0])
    cost = CostSpec.from_table(np.array([[2.5]]), np.array([0.0]), np.array([0.0]))
    assert solve_primal(d, d, ConstraintSpec.martingale_ball(1.0), cost).primal_value == 2.5


def test_zero_cost_has_zero_values():
    rep = solve(ALPHA, BETA, ConstraintSpec.martingale_ball(6.0), CostSpec.zero())
    assert rep.primal_value == 0.0 and abs(rep.dual_value) <= 1e-12


def test_plan_evaluations():
    absc = CostSpec.difference("abs")
    assert evaluate_plan(BALL_PLAN, absc) == pytest.approx(3.5, abs=1e-15)
    assert evaluate_plan(LEFT_CURTAIN, absc) == pytest.approx(3.0, abs=1e-15)
    assert evaluate_plan(BALL_PLAN, CostSpec.zero()) == 0.0


def test_infeasible_carries_certificate():
    with pytest.raises(InfeasibleInstance) as exc:
        solve_primal(measure([0.0]), measure([-1.0, 1.0]), ConstraintSpec.martingale_ball(0.5), EXP)
    assert exc.value.report is not None and not exc.value.report.feasible


def _admissible_kernels(rng, rep, alpha, cons, k=10):
    for i, x in enumerate(alpha.atoms):
        yield i, rep.coupling.kernel(i)
        for _ in range(k):
            res = f_gamma(rng.normal(size=rep.targets.size), x, cons, rep.targets)
            yield i, res.kernel


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_random_instances_against_highs(seed):
    rng = np.random.default_rng(seed)
    alpha, beta, cons, cost = feasible_ball_instance(rng)
    rep = solve(alpha, beta, cons, cost)
    C = cost.matrix(alpha.atoms, beta.atoms)
    radius = np.array([cons.radius_at(x) for x in alpha.atoms])
    c, A, b, hi = oracles.coupling_lp(alpha.atoms, alpha.weights, beta.atoms, beta.weights, radius=radius, cost=C)
    ok, val, _ = oracles.highs(c, A, b, hi)
    assert ok and rep.primal_value == pytest.approx(val, abs=1e-8)
    assert not oracles.check_plan(rep.coupling.matrix, alpha.atoms, beta.atoms, alpha.weights, beta.weights, radius)
    assert rep.gap <= 1e-7
    assert dual_pair_slack(rep, alpha, cost, _admissible_kernels(rng, rep, alpha, cons)) <= 1e-8


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_weak_duality_for_arbitrary_potentials(seed):
    rng = np.random.default_rng(seed)
    alpha, beta, cons, cost = feasible_ball_instance(rng)
    primal = solve_primal(alpha, beta, cons, cost).primal_value
    for _ in range(10):
        val, _ = dual_objective(rng.normal(0, 5, len(beta)), alpha, beta, cons, cost)
        assert val <= primal + 1e-9


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20))
def test_argmin_support_invariant_under_scaling(seed, lam):
    rng = np.random.default_rng(seed)
    alpha, beta, cons, cost = feasible_ball_instance(rng)
    C = cost.matrix(alpha.atoms, beta.atoms)
    rep = solve_primal(alpha, beta, cons, cost)
    if not rep.unique:
        return
    scaled = solve_primal(alpha, beta, cons, CostSpec.from_table(lam * C, alpha.atoms, beta.atoms))
    assert np.array_equal(rep.coupling.matrix > 1e-12, scaled.coupling.matrix > 1e-12)


def _eighths_plan(rng, rows, cols):
    """Integer eighths with every row summing to one half."""
    cuts = np.sort(rng.integers(0, 5, (rows, cols - 1)), axis=1)
    counts = np.diff(np.hstack([np.zeros((rows, 1)), cuts, np.full((rows, 1), 4)]), axis=1)
    return counts / 8


@given(st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_evaluate_plan_is_linear_on_mixtures(k, seed):
    # dyadic masses, mixture weights and integer costs keep every product exact
    rng = np.random.default_rng(seed)
    t = k / 4
    src = measure([0.0, 1.0])
    Yt = np.array([0.0, 1.0, 2.0])
    P1, P2 = _eighths_plan(rng, 2, 3), _eighths_plan(rng, 2, 3)
    cost = CostSpec.from_table(rng.integers(-5, 6, (2, 3)).astype(float), src.atoms, Yt)
    lhs = evaluate_plan(Coupling(src, Yt, t * P1 + (1 - t) * P2), cost)
    rhs = t * evaluate_plan(Coupling(src, Yt, P1), cost) + (1 - t) * evaluate_plan(Coupling(src, Yt, P2), cost)
    assert lhs == rhs
