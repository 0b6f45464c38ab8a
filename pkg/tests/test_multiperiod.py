import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmot import MarginalCurve, PathMeasure, check_multimarginal, measure, paste, skorokhod_discrete, verify_marginals
from cmot.errors import GridOverflow, MarginalMismatch, ValidationError
from cmot.multiperiod import kernel_violations, solve_path_problem

from instances import random_curve

SPLIT = MarginalCurve.from_marginals(
    [measure([0.0]), measure([-1.0, 1.0]), measure([-2.0, 0.0, 2.0], [0.25, 0.5, 0.25])], [1.0, 1.0])
NARROW = MarginalCurve.from_marginals(
    [measure([0.0]), measure([-1.0, 1.0]), measure([-2.0, 2.0])], [1.0, 1.0])


def test_symmetric_split_is_feasible_and_pastes():
    rep = check_multimarginal(SPLIT)
    assert rep.feasible and rep.failed == []
    path = paste(rep.witnesses())
    assert verify_marginals(path, SPLIT)
    assert kernel_violations(path, SPLIT) == []
    assert np.allclose(path.kernels[0], [[0.5, 0.5]])


def test_narrow_final_step_fails_with_certificate():
    rep = check_multimarginal(NARROW)
    assert not rep.feasible and rep.failed == [1]
    bad = rep.intervals[1]
    assert bad.gap > 0 and bad.violating_function is not None


def test_constant_curve_stays_put():
    d = measure([0.0])
    curve = MarginalCurve.from_marginals([d, d, d], [0.5, 3.0])
    path = paste(check_multimarginal(curve).witnesses())
    assert [K.tolist() for K in path.kernels] == [[[1.0]], [[1.0]]]


def test_narrower_second_step_fails_at_that_interval():
    curve = MarginalCurve.from_marginals(NARROW.marginals, [1.0, 0.5])
    assert check_multimarginal(curve).failed == [1]


def test_joint_problem_agrees_with_interval_checks_on_examples():
    for curve, feasible in ((SPLIT, True), (NARROW, False)):
        grids = [m.atoms for m in curve.marginals]
        fixed = {t: m.weights for t, m in enumerate(curve.marginals)}
        assert solve_path_problem(grids, curve.radii, fixed).feasible is feasible


def _shrunk(curve, rng):
    radii = [max(r - float(rng.integers(0, 2)), 1.0) for r in curve.radii]
    return MarginalCurve.from_marginals(curve.marginals, radii)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_joint_lp_feasible_iff_every_interval_is(seed):
    rng = np.random.default_rng(seed)
    curve = _shrunk(random_curve(rng, steps=3), rng)
    grids = [m.atoms for m in curve.marginals]
    fixed = {t: m.weights for t, m in enumerate(curve.marginals)}
    assert solve_path_problem(grids, curve.radii, fixed).feasible == check_multimarginal(curve).feasible


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_pasted_paths_reproduce_random_curves(seed):
    curve = random_curve(np.random.default_rng(seed), steps=4)
    path = paste(check_multimarginal(curve).witnesses())
    assert verify_marginals(path, curve)
    assert kernel_violations(path, curve) == []


def test_perturbed_kernel_breaks_marginals():
    path = paste(check_multimarginal(SPLIT).witnesses())
    K = path.kernels[1].copy()
    K[0] = [0.5, 0.0, 0.5]
    bent = PathMeasure(path.initial, path.grids, (path.kernels[0], K))
    assert not verify_marginals(bent, SPLIT)


def test_paste_rejects_mismatched_witnesses():
    first = check_multimarginal(SPLIT).witnesses()[0]
    other = check_multimarginal(MarginalCurve.from_marginals(
        [measure([-1.0, 1.0], [0.2, 0.8])] * 2, [1.0])).witnesses()[0]
    with pytest.raises(MarginalMismatch):
        paste([first, other])


def _random_path(rng, start, n_next):
    K = rng.dirichlet(np.ones(n_next), size=len(start))
    grid = np.sort(rng.choice(np.arange(-20, 21), n_next, replace=False)).astype(float)
    return PathMeasure(start, (start.atoms, grid), (K,))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_concatenation_is_associative(seed):
    rng = np.random.default_rng(seed)
    a = _random_path(rng, measure([0.0, 1.0], [0.3, 0.7]), 3)
    b = _random_path(rng, measure(a.grids[-1], a.marginal_weights(1)), 4)
    c = _random_path(rng, measure(b.grids[-1], b.marginal_weights(1)), 2)
    left, right = a.concat(b).concat(c), a.concat(b.concat(c))
    assert all(np.array_equal(x, y) for x, y in zip(left.grids, right.grids))
    assert all(np.allclose(x, y, atol=1e-14) for x, y in zip(left.kernels, right.kernels))


def test_concat_rejects_wrong_start():
    a = PathMeasure(measure([0.0]), (np.array([0.0]), np.array([-1.0, 1.0])), (np.array([[0.5, 0.5]]),))
    b = PathMeasure(measure([-1.0, 1.0], [0.2, 0.8]), (np.array([-1.0, 1.0]), np.array([0.0])),
                    (np.array([[1.0], [1.0]]),))
    with pytest.raises(MarginalMismatch):
        a.concat(b)


def test_curve_validation():
    with pytest.raises(ValidationError):
        MarginalCurve((0, 0), (measure([0.0]), measure([0.0])), (1.0,))
    with pytest.raises(ValidationError):
        MarginalCurve.from_marginals([measure([0.0]), measure([0.0])], [])
    with pytest.raises(ValidationError):
        MarginalCurve.from_marginals([measure([0.0])], [])


def test_skorokhod_unit_split_embeds():
    beta = measure([-1.0, 1.0])
    rep = skorokhod_discrete(measure([0.0]), beta, sigma=1.0, n_steps=4)
    assert rep.feasible
    assert rep.step == pytest.approx(0.5) and rep.radius == pytest.approx(1.5)
    assert np.allclose(rep.path.marginal_weights(4), beta.weights, atol=1e-10)
    for t, K in enumerate(rep.path.kernels):
        X, Yg = rep.path.grids[t], rep.path.grids[t + 1]
        assert np.allclose(K @ Yg, X, atol=1e-10)
        assert K[np.abs(Yg[None, :] - X[:, None]) > rep.radius + 1e-12].max(initial=0.0) <= 1e-12


def test_skorokhod_with_too_little_variance_is_infeasible():
    alpha, beta = measure([0.0]), measure([-1.0, 1.0])
    unreachable = skorokhod_discrete(alpha, beta, sigma=0.01, n_steps=4)
    assert not unreachable.feasible and math.isinf(unreachable.gap)
    one_step = skorokhod_discrete(alpha, beta, sigma=0.01, n_steps=1)
    assert not one_step.feasible and one_step.gap > 0


def test_skorokhod_grid_cap():
    with pytest.raises(GridOverflow):
        skorokhod_discrete(measure([0.0]), measure([-1.0, 1.0]), sigma=1.0, n_steps=40, cap=100)
    with pytest.raises(ValidationError):
        skorokhod_discrete(measure([0.0]), measure([-1.0, 1.0]), sigma=0.0, n_steps=4)
