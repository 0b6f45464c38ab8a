import numpy as np
import pytest
from hypothesis import given, strategies as st

from cmot.errors import DimensionMismatch
from cmot.lp import LinearProgram, LpStatus, farkas_value, solve_lp, verify_certificate

import oracles


def transport_lp(rng, n, m):
    a = rng.random(n) + 0.1
    b = rng.random(m) + 0.1
    a, b = a / a.sum(), b / b.sum()
    C = rng.normal(size=(n, m))
    c, A, bb, hi = oracles.coupling_lp(np.arange(n), a, np.arange(m), b, martingale=False, cost=C)
    return LinearProgram(c, A, bb), (c, A, bb, hi)


def test_forced_variable():
    out = solve_lp(LinearProgram(np.array([1.0]), np.array([[1.0]]), np.array([1.0])))
    assert out.status is LpStatus.OPTIMAL and out.value == pytest.approx(1.0, abs=1e-12)
    assert verify_certificate(LinearProgram(np.array([1.0]), np.array([[1.0]]), np.array([1.0])), out)


def test_contradictory_equalities():
    lp = LinearProgram(np.array([0.0]), np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
    out = solve_lp(lp)
    assert out.infeasible
    assert farkas_value(lp, out.farkas) > 1e-9
    assert verify_certificate(lp, out)
    out.farkas = np.zeros_like(out.farkas)
    assert not verify_certificate(lp, out)


def test_perturbed_solution_fails_verification():
    rng = np.random.default_rng(0)
    lp, _ = transport_lp(rng, 3, 4)
    out = solve_lp(lp)
    assert verify_certificate(lp, out)
    out.x = out.x + 1e-3
    assert not verify_certificate(lp, out)


def test_unbounded():
    lp = LinearProgram(np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))
    out = solve_lp(lp)
    assert out.status is LpStatus.UNBOUNDED
    assert verify_certificate(lp, out)


def test_upper_bounds_and_crossed_bounds():
    lp = LinearProgram(np.array([-1.0, -2.0]), np.array([[1.0, 1.0]]), np.array([1.0]), hi=np.array([1.0, 0.3]))
    out = solve_lp(lp)
    assert out.optimal and np.allclose(out.x, [0.7, 0.3])
    assert verify_certificate(lp, out)
    tight = LinearProgram(np.array([0.0, 0.0]), np.array([[1.0, 1.0]]), np.array([1.0]), hi=np.array([0.4, 0.3]))
    out = solve_lp(tight)
    assert out.infeasible and verify_certificate(tight, out)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        LinearProgram(np.zeros(2), np.zeros((1, 3)), np.zeros(1))


def test_deterministic():
    rng = np.random.default_rng(1)
    lp, _ = transport_lp(rng, 6, 7)
    a, b = solve_lp(lp), solve_lp(lp)
    assert np.array_equal(a.x, b.x) and a.value == b.value and np.array_equal(a.duals, b.duals)


def test_small_transport_matches_vertex_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n, m = rng.integers(1, 4), rng.integers(1, 5)
        lp, (c, A, b, hi) = transport_lp(rng, n, m)
        out = solve_lp(lp)
        feasible, best = oracles.vertex_enumeration(c, A, b, hi)
        assert feasible and out.optimal
        assert out.value == pytest.approx(best, abs=1e-7)


def test_transport_up_to_12x12_matches_highs():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n, m = rng.integers(1, 13), rng.integers(1, 13)
        lp, (c, A, b, hi) = transport_lp(rng, n, m)
        out = solve_lp(lp)
        ok, val, _ = oracles.highs(c, A, b, hi)
        assert ok and out.optimal
        assert abs(out.value - val) <= 1e-7
        # weak duality on the returned pair
        assert out.value >= float(out.duals @ b) - 1e-9


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_random_lp_certificates_verify(m, extra, seed):
    rng = np.random.default_rng(seed)
    n = m + extra
    A = rng.integers(-3, 4, (m, n)).astype(float)
    b = rng.integers(-3, 4, m).astype(float)
    c = rng.integers(-3, 4, n).astype(float)
    hi = np.where(rng.random(n) < 0.3, rng.integers(1, 4, n), np.inf).astype(float)
    lp = LinearProgram(c, A, b, hi=hi)
    out = solve_lp(lp)
    assert verify_certificate(lp, out)
    bounds = [(0, None if np.isinf(h) else h) for h in hi]
    from scipy.optimize import linprog

    ref = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    expected = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[ref.status]
    assert out.status is expected
    if expected is LpStatus.OPTIMAL:
        assert out.value == pytest.approx(ref.fun, abs=1e-7)
