import math

import numpy as np
import pytest

from accelfb import diagnostics as dg
from accelfb.core import InputError
from accelfb.diagnostics import Trace, energy, fit_rate
from accelfb.solver import SolverConfig, run, run_baseline

from conftest import quadratic_l1_problem, quadratic_problem


def _run(problem, alpha=4.0, frac=0.9, K=2000, x0=None, **kw):
    x0 = np.ones(problem.dimension) if x0 is None else x0
    cfg = SolverConfig(alpha=alpha, step=frac / problem.lipschitz, max_iter=K, initial_point=x0, **kw)
    return run(problem, cfg)


def _with_column(trace, name, values):
    cols = dict(trace.columns)
    cols[name] = np.asarray(values, dtype=float)
    return Trace(cols)


def test_energy_examples():
    assert energy(5, 0.0, 0.0, 4.0, 0.1) == 0.0
    assert energy(1, 0.7, 0.3, 3.0, 0.5) == pytest.approx(2 * 0.7 + 2 * 0.3**2)
    np.testing.assert_allclose(energy(np.array([1, 2]), np.array([1.0, 1.0]), np.zeros(2), 3.0, 0.5),
                               [2.0, 4.5])


@pytest.fixture(scope="module")
def stationary():
    p = quadratic_l1_problem(1.0, 3)
    return _run(p, x0=np.zeros(3), K=200)


def test_stationary_run_checks(stationary):
    t = stationary.trace
    for v in (dg.check_energy_decrease(t, 4.0, stationary.step),
              dg.check_pointwise_bounds(t, 4.0, stationary.step),
              *dg.check_partial_sums(t, 4.0, stationary.step)[:2],
              dg.check_mechanical(t, 4.0, stationary.step)):
        assert v.passed and v.worst_slack == 0, v
    _, _, sums = dg.check_partial_sums(t, 4.0, stationary.step)
    assert sums["sum_k_theta"] == 0 and sums["sum_k_vel2"] == 0
    assert np.all(t["lemma1_quantity"] == 0)
    assert dg.check_lemma1_tail(t, 4.0).passed
    p = quadratic_l1_problem(1.0, 3)
    (v,) = [v for v in dg.check_iterate_convergence(stationary.iterates, p, stationary.step, 4.0)]
    assert v.passed


@pytest.mark.parametrize("alpha", [3.0, 3.5, 4.0, 10.0])
def test_energy_and_pointwise_bounds_on_quadratic(quadratic, alpha):
    res = _run(quadratic, alpha=alpha)
    ve = dg.check_energy_decrease(res.trace, alpha, res.step)
    v2 = dg.check_pointwise_bounds(res.trace, alpha, res.step)
    assert ve.passed and v2.passed
    assert ve.worst_slack is not None


def test_partial_sums_near_three(lasso):
    res = _run(lasso, alpha=3.01, x0=np.zeros(lasso.dimension))
    v3, v4, sums = dg.check_partial_sums(res.trace, 3.01, res.step)
    assert v3.passed and v4.passed
    assert math.isfinite(sums["bound_sum_k_theta"]) and sums["bound_sum_k_theta"] > 100 * sums["sum_k_theta"]
    v3, v4, _ = dg.check_partial_sums(res.trace, 3.0, res.step)
    assert v3.passed is None and v4.passed is None


def test_partial_sum_bounds_scale_like_inverse_alpha_gap(lasso):
    s = 0.9 / lasso.lipschitz
    res = _run(lasso, alpha=3.01, x0=np.zeros(lasso.dimension), K=10)
    _, _, a = dg.check_partial_sums(res.trace, 3.01, s)
    _, _, b = dg.check_partial_sums(res.trace, 3.02, s)
    e1 = res.trace["energy"][0]
    assert a["bound_sum_k_theta"] == pytest.approx(2.01 * e1 / (2 * s * 0.01))
    assert a["bound_sum_k_vel2"] == pytest.approx(3.01 * (3 * 3.01 - 5) * e1 / (2 * 2.01 * 0.01))
    assert b["bound_sum_k_theta"] < a["bound_sum_k_theta"]


def test_energy_pass_implies_pointwise_pass(quadratic, degenerate, lasso):
    for prob in (quadratic, degenerate, lasso):
        for alpha in (3.0, 4.0, 7.0):
            res = _run(prob, alpha=alpha, K=500)
            if dg.check_energy_decrease(res.trace, alpha, res.step).passed:
                assert dg.check_pointwise_bounds(res.trace, alpha, res.step).passed


def test_corrupted_energy_is_caught(lasso):
    res = _run(lasso, K=300, x0=np.zeros(lasso.dimension))
    E = np.array(res.trace["energy"])
    E[150] = E[149] * 1.01
    bad = _with_column(res.trace, "energy", E)
    v = dg.check_energy_decrease(bad, 4.0, res.step)
    assert v.passed is False and v.worst_k == 150
    assert dg.check_energy_ledger(bad, 4.0, res.step).passed is False


def test_mechanical_catches_injected_increase(lasso):
    res = _run(lasso, K=300, x0=np.zeros(lasso.dimension))
    th = np.array(res.trace["theta"])
    th[200] += 1.0
    v = dg.check_mechanical(_with_column(res.trace, "theta", th), 4.0, res.step)
    assert v.passed is False and v.worst_k == 200


def test_ledger_recomputed_from_iterates(lasso):
    alpha = 4.0
    res = _run(lasso, alpha=alpha, K=1000, x0=np.zeros(lasso.dimension))
    X = res.iterates
    s = res.step
    xs = lasso.reference_minimizer
    K = res.iterations
    theta = np.array([lasso.suboptimality(x) for x in X])
    vel = np.linalg.norm(np.diff(X, axis=0), axis=1)
    ks = np.arange(1, K + 1, dtype=float)
    x_prev = np.vstack([X[:1], X[:-2]])
    z = X[:-1] + ((ks - 1) / (alpha - 1))[:, None] * (X[:-1] - x_prev)
    zd = np.linalg.norm(z - xs, axis=1)
    expect = {
        "theta": theta[:-1],
        "d": vel**2 / (2 * s),
        "velocity_norm": vel,
        "energy": 2 * s / (alpha - 1) * (ks + alpha - 2) ** 2 * theta[:-1] + (alpha - 1) * zd**2,
        "k2_theta": ks**2 * theta[:-1],
        "k_velocity": ks * vel,
        "lemma1_quantity": ks**2 * vel**2 + (ks + 1) ** 2 * theta[1:],
        "z_dist": zd,
    }
    for col, val in expect.items():
        np.testing.assert_allclose(res.trace[col], val, rtol=1e-12, atol=0, err_msg=col)


@pytest.mark.parametrize("power", [2.0, 1.0, 0.5, 3.7])
def test_fit_rate_recovers_power_law(power):
    ks = np.arange(1, 20001)
    vals = 3.7 * ks.astype(float) ** -power
    fit = fit_rate((ks, vals), 100, 10_000)
    assert abs(fit.slope + power) <= 1e-6
    assert fit.k_lo == 100 and fit.k_hi == 10_000


def test_fit_rate_truncates_at_zero():
    ks = np.arange(1, 1001)
    vals = ks.astype(float) ** -2.0
    vals[500:] = 0.0
    fit = fit_rate((ks, vals), 10, 1000)
    assert fit.k_hi == 500
    assert abs(fit.slope + 2) <= 1e-6
    with pytest.raises(InputError):
        fit_rate((ks, vals), 5, 1000)


def test_descent_inequality_tight_in_quadratic_case():
    p = quadratic_problem(1)
    v = dg.check_descent_inequality(p, 1.0, samples=200, seed=3)
    assert v.passed
    # with Psi = 0 and s = 1/L = 1 the slack is exactly (x - y)^2 / 2, zero on x = y pairs
    assert abs(v.worst_slack) <= 1e-15
    x, y = 0.4, -1.3
    x_plus = y - 1.0 * y
    G = y - x_plus
    slack = (0.5 * x**2 + G * (y - x) - 0.5 * G**2) - 0.5 * x_plus**2
    assert slack == pytest.approx(0.5 * (x - y) ** 2)


def test_descent_inequality_lasso(lasso):
    for frac in (1.0, 0.9):
        v = dg.check_descent_inequality(lasso, frac / lasso.lipschitz, samples=1000, seed=0)
        assert v.passed, v
    assert dg.check_descent_inequality(lasso, 1.1 / lasso.lipschitz).passed is None


def test_inexact_energy_with_zero_errors_is_not_applicable(lasso):
    res = _run(lasso, K=100, x0=np.zeros(lasso.dimension))
    ve, vz, budget = dg.check_inexact_energy(res.trace, 4.0, res.step)
    assert ve.passed is None and vz.passed is None
    assert budget["total"] == 0


def test_baseline_negative_control():
    from accelfb.problems import make_quadratic
    p = make_quadratic(20, 1e6)
    cfg = SolverConfig(alpha=4.0, step=0.9 / p.lipschitz, max_iter=10_000, initial_point=np.ones(20))
    base = run_baseline(p, cfg)
    acc = run(p, cfg)
    vt, _ = dg.check_rate_tails(base.trace)
    assert vt.passed is False
    gap = fit_rate(acc.trace, 100, 10_000).slope - fit_rate(base.trace, 100, 10_000).slope
    assert gap <= -0.6
    rep = dg.build_report(base.trace, 4.0, cfg.step, method="baseline")
    assert not rep.certified


def test_report_roundtrip_and_summary(lasso):
    res = _run(lasso, K=500, x0=np.zeros(lasso.dimension))
    rep = dg.build_report(res.trace, 4.0, res.step, problem=lasso, iterates=res.iterates,
                          z_consistency=(res.z_max_gap, res.z_max_norm), descent_samples=100)
    d = rep.to_dict()
    assert {"verdicts", "partial_sums", "rate", "certified"} <= set(d)
    names = [v["name"] for v in d["verdicts"]]
    assert "energy_decrease" in names and "z_dual_formula" in names
    assert all(v["worst_slack"] is not None for v in d["verdicts"] if v["pass"] is not None)
    assert "energy_decrease" in rep.summary()
    with pytest.raises(KeyError):
        rep.verdict("nope")


def test_uncertified_reference_skips_xstar_checks():
    from accelfb import core
    p = core.SplitProblem(core.quadratic_smooth(np.ones(2)), core.l1_term(0.1), 2)
    res = _run(p, K=200, x0=np.array([1.0, -1.0]))
    rep = dg.build_report(res.trace, 4.0, res.step, reference_certified=False, problem=p,
                          z_consistency=(res.z_max_gap, res.z_max_norm), descent_samples=50)
    assert not rep.certified
    assert rep.verdict("energy_decrease").passed is None
    assert rep.verdict("mechanical_energy").passed
    assert rep.verdict("z_dual_formula").passed
