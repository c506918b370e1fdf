import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accelfb import core, solver
from accelfb.core import InputError
from accelfb.solver import (IterateState, PowerLawErrors, SolverConfig, Termination,
                            extrapolate, fb_step, gradient_mapping, inertial_coefficient,
                            inexact_fb_step, run, run_baseline, z_direct, z_recursive)

from conftest import bisect_prox_l1, quadratic_l1_problem, quadratic_problem


def test_inertial_coefficient_examples():
    assert inertial_coefficient(1, 3.0) == 0.0
    assert inertial_coefficient(1, 10.0) == 0.0
    assert inertial_coefficient(3, 3.0) == pytest.approx(2 / 5)
    assert inertial_coefficient(10**9, 4.0) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(InputError):
        inertial_coefficient(0, 3.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**6), st.floats(3, 100))
def test_inertial_coefficient_monotone(k, alpha):
    c = inertial_coefficient(k, alpha)
    assert 0 <= c < 1
    assert inertial_coefficient(k + 1, alpha) > c
    if k > 1:
        assert inertial_coefficient(k, alpha + 1.0) < c


def test_extrapolate_examples():
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(extrapolate(x, x, 7, 4.0), x)
    np.testing.assert_array_equal(extrapolate(x, np.array([9.0, -3.0]), 1, 4.0), x)
    np.testing.assert_allclose(extrapolate([1.0, 0.0], [0.0, 0.0], 3, 3.0), [1.4, 0.0], rtol=1e-15)


def test_gradient_mapping_examples():
    p = quadratic_problem(3)
    y = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(gradient_mapping(p, 0.3, y), y, rtol=1e-14)
    np.testing.assert_array_equal(gradient_mapping(p, 0.3, np.zeros(3)), np.zeros(3))
    # hand-evaluated chain, cross-checked through the 1-D prox oracle
    p1 = quadratic_l1_problem(1.0)
    oracle = (2.0 - bisect_prox_l1(1.0, 0.5, 2.0 - 0.5 * 2.0)) / 0.5
    assert oracle == pytest.approx(3.0, abs=1e-12)
    np.testing.assert_allclose(gradient_mapping(p1, 0.5, [2.0]), [3.0], rtol=1e-15)


def test_fb_step_examples():
    np.testing.assert_allclose(fb_step(quadratic_problem(), 0.5, [2.0]), [1.0])
    np.testing.assert_array_equal(fb_step(quadratic_l1_problem(), 0.5, [0.0]), [0.0])


def test_rewrite_identity_on_lasso(lasso):
    s = 0.9 / lasso.lipschitz
    rng = np.random.default_rng(1)
    for _ in range(200):
        y = rng.normal(scale=2, size=lasso.dimension)
        gap = np.linalg.norm(fb_step(lasso, s, y) - (y - s * gradient_mapping(lasso, s, y)))
        assert gap <= 1e-12 * (1 + np.linalg.norm(y))


def test_inexact_step_examples(lasso):
    np.testing.assert_allclose(inexact_fb_step(quadratic_problem(), 0.5, [2.0], [1.0]), [1.5])
    s = 0.9 / lasso.lipschitz
    rng = np.random.default_rng(2)
    y = rng.normal(size=lasso.dimension)
    np.testing.assert_array_equal(inexact_fb_step(lasso, s, y, np.zeros(lasso.dimension)),
                                  fb_step(lasso, s, y))
    for _ in range(50):
        y = rng.normal(size=lasso.dimension)
        g = rng.normal(size=lasso.dimension)
        g *= 1e-8 / np.linalg.norm(g)
        dev = np.linalg.norm(inexact_fb_step(lasso, s, y, g) - fb_step(lasso, s, y))
        assert dev <= s * 1e-8 * (1 + 1e-9)


def test_z_examples():
    x = np.array([1.0, 2.0])
    st1 = IterateState(k=1, x_curr=x, x_prev=np.zeros(2), y=x, z=x)
    np.testing.assert_array_equal(z_direct(st1, 4.0), x)
    st2 = IterateState(k=5, x_curr=x, x_prev=x, y=x, z=x)
    np.testing.assert_array_equal(z_direct(st2, 4.0), x)
    st3 = IterateState(k=3, x_curr=np.array([1.0]), x_prev=np.array([0.0]), y=None, z=None)
    np.testing.assert_allclose(z_direct(st3, 3.0), [2.0])
    np.testing.assert_array_equal(z_recursive([0.3], 4, 4.0, 0.1, [0.0]), [0.3])
    np.testing.assert_allclose(z_recursive([0.0], 1, 3.0, 0.5, [1.0]), [-0.75])


def _scalar_oracle(alpha, s, K, x0=1.0):
    """Plain-Python recursion for Phi = x^2/2, Psi = 0."""
    x_prev = x = x0
    xs = [x]
    for k in range(1, K + 1):
        y = x + (k - 1) / (k + alpha - 1) * (x - x_prev)
        x_prev, x = x, (1 - s) * y
        xs.append(x)
    return xs


def test_run_scalar_quadratic_matches_oracle():
    p = quadratic_problem(1)
    res = run(p, SolverConfig(alpha=4.0, step=0.5, max_iter=200, initial_point=[1.0]))
    oracle = _scalar_oracle(4.0, 0.5, 200)
    np.testing.assert_allclose(res.iterates[:, 0], oracle, rtol=1e-12, atol=1e-300)
    assert res.termination is Termination.BUDGET_EXHAUSTED
    assert res.iterations == 200
    x_K = res.iterates[-2, 0]
    assert 0.5 * x_K**2 <= 1e-12
    assert abs(x_K) <= 1e-6
    assert res.trace["theta"][-1] <= 1e-12


def test_run_first_step_is_plain_fb_step(lasso):
    s = 0.9 / lasso.lipschitz
    x0 = np.linspace(-1, 1, lasso.dimension)
    res = run(lasso, SolverConfig(alpha=4.0, step=s, max_iter=3, initial_point=x0))
    np.testing.assert_array_equal(res.iterates[1], fb_step(lasso, s, x0))


def test_run_stationary_at_minimizer():
    p = quadratic_l1_problem(1.0, 4)
    res = run(p, SolverConfig(alpha=4.0, step=0.5, max_iter=50, initial_point=np.zeros(4)))
    assert np.all(res.iterates == 0)
    assert np.all(res.trace["theta"] == 0)
    assert np.all(res.trace["energy"] == 0)
    assert res.z_max_gap == 0


def test_baseline_examples():
    p = quadratic_problem(1)
    res = run_baseline(p, SolverConfig(alpha=4.0, step=0.5, max_iter=30, initial_point=[1.0]))
    np.testing.assert_allclose(res.iterates[:, 0], 0.5 ** np.arange(31), rtol=1e-15)
    assert res.method == "baseline"
    res = run_baseline(p, SolverConfig(alpha=4.0, step=0.5, max_iter=30, initial_point=[0.0]))
    assert np.all(res.iterates == 0)


def test_z_chain_matches_direct_formula(lasso):
    s = 0.9 / lasso.lipschitz
    res = run(lasso, SolverConfig(alpha=4.0, step=s, max_iter=2000, initial_point=np.zeros(lasso.dimension)))
    assert res.z_max_gap <= 1e-8 * (1 + res.z_max_norm)


@pytest.mark.parametrize("kwargs", [
    dict(alpha=2.9),
    dict(alpha=float("nan")),
    dict(step=0.0),
    dict(step=1.0),          # s = 1/L without override
    dict(step=1.5),
    dict(max_iter=0),
    dict(max_iter=2**31),
    dict(initial_point=[1.0, 2.0]),
    dict(record_every=0),
])
def test_config_validation(kwargs):
    base = dict(alpha=4.0, step=0.5, max_iter=10, initial_point=[1.0])
    base.update(kwargs)
    with pytest.raises(InputError):
        run(quadratic_problem(1), SolverConfig(**base))


def test_critical_step_override():
    p = quadratic_problem(1)
    cfg = SolverConfig(alpha=4.0, step=1.0, max_iter=10, initial_point=[1.0], allow_critical_step=True)
    assert run(p, cfg).termination is Termination.BUDGET_EXHAUSTED
    cfg.step = 1.01
    with pytest.raises(InputError):
        run(p, cfg)


def test_numerical_failure_keeps_last_good_state():
    def grad(x):
        return np.full_like(x, np.nan) if abs(x[0]) < 0.3 else x

    smooth = core.SmoothTerm(value=lambda x: 0.5 * float(x @ x), gradient=grad, lipschitz=1.0)
    p = core.SplitProblem(smooth, core.zero_term(), 1)
    res = run(p, SolverConfig(alpha=4.0, step=0.5, max_iter=100, initial_point=[1.0]))
    assert res.termination is Termination.NUMERICAL_FAILURE
    assert np.all(np.isfinite(res.final_state.x_curr))
    assert res.iterations < 100
    assert res.iterates.shape[0] == res.iterations + 1


def test_residual_early_stop():
    res = run(quadratic_problem(2), SolverConfig(alpha=4.0, step=0.5, max_iter=10**5,
                                                 initial_point=[1.0, 1.0], residual_tol=1e-8))
    assert res.termination is Termination.RESIDUAL_BELOW_TOL
    assert res.iterations < 10**5


def test_record_every_decimates():
    res = run(quadratic_problem(1), SolverConfig(alpha=4.0, step=0.5, max_iter=100,
                                                 initial_point=[1.0], record_every=10))
    np.testing.assert_array_equal(res.trace.k, np.arange(1, 101, 10))
    assert not res.trace.contiguous


def test_power_law_errors():
    e = PowerLawErrors(0.1, 3.0, 5, seed=4)
    assert e.summable
    assert np.linalg.norm(e(2)) == pytest.approx(0.1 / 8)
    np.testing.assert_allclose(e(1) / np.linalg.norm(e(1)), e(7) / np.linalg.norm(e(7)))
    assert not PowerLawErrors(0.1, 1.0, 5).summable
    r = PowerLawErrors(0.1, 3.0, 5, seed=4, mode="random")
    np.testing.assert_array_equal(r(3), PowerLawErrors(0.1, 3.0, 5, seed=4, mode="random")(3))
    assert not np.allclose(r(3) / np.linalg.norm(r(3)), r(4) / np.linalg.norm(r(4)))
    with pytest.raises(InputError):
        PowerLawErrors(0.1, 3.0, 5, mode="wild")


def test_inexact_run_records_errors(lasso):
    s = 0.9 / lasso.lipschitz
    sched = PowerLawErrors(0.1, 3.0, lasso.dimension, seed=0)
    res = run(lasso, SolverConfig(alpha=4.0, step=s, max_iter=100, initial_point=np.zeros(lasso.dimension),
                                  error_schedule=sched))
    assert res.errors.shape == (100, lasso.dimension)
    np.testing.assert_allclose(res.trace["error_norm"], 0.1 * np.arange(1, 101, dtype=float) ** -3, rtol=1e-12)


def test_uncertified_problem_runs():
    p = core.SplitProblem(core.quadratic_smooth(np.ones(2)), core.l1_term(0.1), 2)
    res = run(p, SolverConfig(alpha=4.0, step=0.5, max_iter=50, initial_point=[1.0, -1.0]))
    assert np.all(np.isnan(res.trace["z_dist"]))
    assert np.all(res.trace["theta"] > 0)
    assert math.isfinite(res.trace["theta"][0])
