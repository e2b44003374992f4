import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fopc import (
    Box,
    FunctionProblem,
    SamplingGrid,
    WholeSpace,
    contraction_rates,
    quadratic_problem,
    reference_trajectory,
)
from fopc.scenarios import build_scalar
from fopc.solvers import (
    BACKWARD,
    DivergenceError,
    PredictionState,
    SolverConfig,
    approx_mixed_derivative,
    correct,
    predict_constrained,
    predict_exact,
    predict_unconstrained,
    run_cfopc,
    run_tracking,
    run_ufopc,
    with_counts,
)


def ramp_problem():
    """f = 1/2 (x - t)^2."""
    return quadratic_problem(np.eye(1), drift=lambda t: (np.array([t]), np.array([1.0])))


def state_at(problem, x, t, h):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return PredictionState(x_k=x, grad_k=problem.gradient(x, t), tdx_k=problem.mixed_derivative(x, t), t_k=t, h=h)


def random_quadratic(rng, n):
    A = rng.standard_normal((n, n))
    H = A @ A.T / n + np.eye(n)
    c0, v = rng.standard_normal(n), rng.standard_normal(n)
    return quadratic_problem(H, drift=lambda t: (c0 + v * t, v))


# -- config ---------------------------------------------------------------------


def test_config_validation():
    SolverConfig(alpha=0.1, beta=0.1, P=math.inf)
    for bad in (
        dict(alpha=0, beta=0.1),
        dict(alpha=0.1, beta=0.1, P=-1),
        dict(alpha=0.1, beta=0.1, P=1.5),
        dict(alpha=0.1, beta=0.1, C=-1),
        dict(alpha=0.1, beta=0.1, gamma=1.5),
        dict(alpha=0.1, beta=0.1, derivative_mode="forward"),
        dict(alpha=0.1, beta=0.1, extra_corrections=-2),
    ):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    cfg = with_counts(SolverConfig(alpha=0.1, beta=0.2), P=3, C=4)
    assert (cfg.P, cfg.C, cfg.beta) == (3, 4, 0.2)


# -- prediction -----------------------------------------------------------------


def test_predict_hand_unrolled():
    p = ramp_problem()
    s = state_at(p, 0.0, 0.0, 0.1)
    ws = WholeSpace(1)
    assert predict_constrained(p, ws, s, 0.5, 1)[0] == pytest.approx(0.05, abs=1e-15)
    assert predict_constrained(p, ws, s, 0.5, 2)[0] == pytest.approx(0.075, abs=1e-15)
    np.testing.assert_array_equal(predict_constrained(p, ws, s, 0.5, 0), s.x_k)


def test_predict_matches_naive_loop():
    rng = np.random.default_rng(3)
    p = random_quadratic(rng, 4)
    s = state_at(p, rng.standard_normal(4), 0.3, 0.05)
    box = Box.uniform(4, -0.5, 0.5)
    x = s.x_k.copy()
    H = p.hessian(s.x_k, s.t_k)
    for _ in range(5):
        x = np.clip(x - 0.2 * (H @ (x - s.x_k) + s.h * s.tdx_k + s.grad_k), -0.5, 0.5)
    np.testing.assert_allclose(predict_constrained(p, box, s, 0.2, 5), x, rtol=0, atol=1e-12)


def test_predict_unconstrained_gamma_zero_without_drift_is_identity():
    p = quadratic_problem(np.diag([1.0, 2.0]), b=[1.0, -1.0])
    s = state_at(p, [0.3, 0.4], 0.0, 0.1)
    assert np.any(s.grad_k != 0)
    np.testing.assert_array_equal(predict_unconstrained(p, s, 0.3, 7, gamma=0.0), s.x_k)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 6))
def test_unconstrained_gamma_one_equals_constrained_on_wholespace(seed, P):
    rng = np.random.default_rng(seed)
    p = random_quadratic(rng, 3)
    s = state_at(p, rng.standard_normal(3), float(rng.uniform(0, 5)), 0.1)
    a = predict_unconstrained(p, s, 0.4, P, gamma=1.0)
    b = predict_constrained(p, WholeSpace(3), s, 0.4, P)
    np.testing.assert_array_equal(a, b)


def test_predict_exact_closed_form_and_box():
    p = quadratic_problem(np.array([[2.0]]))
    s = PredictionState(x_k=np.zeros(1), grad_k=np.ones(1), tdx_k=np.zeros(1), t_k=0.0, h=0.1)
    x, ok = predict_exact(p, WholeSpace(1), s)
    assert ok and x[0] == pytest.approx(-0.5, abs=1e-15)
    x, ok = predict_exact(p, Box([0.0], [1.0]), s)
    assert ok and x[0] == pytest.approx(0.0, abs=1e-12)
    x, ok = predict_exact(p, WholeSpace(1), s, closed_form=False, tol=1e-14)
    assert ok and x[0] == pytest.approx(-0.5, abs=1e-12)


def test_predict_exact_stationary():
    p = quadratic_problem(np.diag([1.0, 3.0]))
    s = PredictionState(x_k=np.array([0.2, 0.1]), grad_k=np.zeros(2), tdx_k=np.zeros(2), t_k=0.0, h=0.1)
    for fs in (WholeSpace(2), Box.uniform(2, 0, 1)):
        x, _ = predict_exact(p, fs, s)
        np.testing.assert_allclose(x, s.x_k, atol=1e-14)


def test_predict_exact_is_first_order_taylor_of_solution():
    omega, h = 0.7, 0.05
    p = quadratic_problem(
        np.eye(1),
        drift=lambda t: (np.array([math.cos(omega * t)]), np.array([-omega * math.sin(omega * t)])),
    )
    for tk in (0.0, 0.4, 2.1):
        s = state_at(p, math.cos(omega * tk), tk, h)
        x, _ = predict_exact(p, WholeSpace(1), s, gamma=1.0)
        taylor = math.cos(omega * tk) - h * omega * math.sin(omega * tk)
        assert x[0] == pytest.approx(taylor, abs=1e-15)


def test_predict_exact_iteration_cap_warns():
    p = quadratic_problem(np.diag([1.0, 100.0]))
    s = PredictionState(x_k=np.zeros(2), grad_k=np.ones(2), tdx_k=np.zeros(2), t_k=0.0, h=0.1)
    with pytest.warns(RuntimeWarning):
        _, ok = predict_exact(p, Box.uniform(2, -10, 10), s, tol=1e-14, max_iters=3)
    assert not ok


# -- correction -----------------------------------------------------------------


def test_correct_examples():
    p = quadratic_problem(np.eye(2))
    x1 = np.ones(2)
    np.testing.assert_array_equal(correct(p, WholeSpace(2), x1, 0.0, 0.5, 0), x1)
    np.testing.assert_allclose(correct(p, WholeSpace(2), x1, 0.0, 0.5, 1), [0.5, 0.5])
    box = Box.uniform(2, 0.2, 1.0)
    np.testing.assert_allclose(correct(p, box, x1, 0.0, 0.5, 2), [0.25, 0.25])
    np.testing.assert_allclose(correct(p, box, x1, 0.0, 0.5, 3), [0.2, 0.2])


def test_prediction_equals_correction_on_linear_drift_quadratics():
    """With exact first-order model, P prediction steps are P correction steps at t_{k+1}."""
    rng = np.random.default_rng(11)
    p = random_quadratic(rng, 5)
    box = Box.uniform(5, -0.3, 0.3)
    for P in (1, 2, 5):
        s = state_at(p, box.project(rng.standard_normal(5)), 1.3, 0.2)
        pred = predict_constrained(p, box, s, 0.1, P)
        corr = correct(p, box, s.x_k, 1.5, 0.1, P)
        np.testing.assert_allclose(pred, corr, rtol=0, atol=1e-12)


# -- mixed derivative -------------------------------------------------------------


def test_approx_mixed_derivative():
    np.testing.assert_array_equal(approx_mixed_derivative([2.0], [2.0], 0.1), [0.0])
    np.testing.assert_allclose(approx_mixed_derivative([1.1], [1.0], 0.1), [1.0])
    with pytest.raises(ValueError):
        approx_mixed_derivative([1.0], [1.0], 0.0)


def test_backward_difference_on_scalar_scenario():
    prob, _, consts = build_scalar()
    x, t, h = np.array([0.3]), 1.0, 0.01
    est = approx_mixed_derivative(prob.gradient(x, t), prob.gradient(x, t - h), h)
    exact = prob.mixed_derivative(x, t)
    assert abs(est[0] - exact[0]) <= consts.C3 * h


# -- drivers --------------------------------------------------------------------


def test_static_problem_converges_at_correction_rate():
    c = np.array([0.5, -1.0])
    p = quadratic_problem(np.diag([1.0, 2.5]), b=c)
    cfg = SolverConfig(alpha=0.5, beta=0.5, P=0, C=4)
    grid = SamplingGrid(h=0.1, k_max=10)
    x0 = np.zeros(2)
    run = run_cfopc(p, WholeSpace(2), grid, cfg, x0)
    _, rho_C = contraction_rates(1.0, 2.5, 0.5, 0.5)
    for k in (1, 5, 10):
        assert np.linalg.norm(run.iterates[k] - c) <= rho_C ** (cfg.C * k) * np.linalg.norm(x0 - c) + 1e-15


def test_noop_solver_keeps_x0():
    prob, ws, _ = build_scalar()
    run = run_tracking(prob, ws, SamplingGrid(0.1, 20), SolverConfig(alpha=0.5, beta=0.5, P=0, C=0), np.array([0.7]))
    assert np.all(run.iterates == 0.7)


def test_ufopc_gamma_one_equals_cfopc_on_wholespace():
    rng = np.random.default_rng(5)
    p = random_quadratic(rng, 3)
    grid = SamplingGrid(0.1, 30)
    x0 = rng.standard_normal(3)
    cfg = SolverConfig(alpha=0.3, beta=0.3, P=2, C=2, gamma=1.0)
    a = run_ufopc(p, grid, cfg, x0)
    b = run_cfopc(p, WholeSpace(3), grid, cfg, x0)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    np.testing.assert_array_equal(a.predicted, b.predicted)


def test_exact_gamma_zero_stays_at_static_optimum():
    c = np.array([1.0, 2.0])
    p = quadratic_problem(np.diag([1.0, 2.0]), b=c)
    cfg = SolverConfig(alpha=0.4, beta=0.4, P=math.inf, C=1, gamma=0.0)
    run = run_ufopc(p, SamplingGrid(0.1, 10), cfg, c)
    np.testing.assert_array_equal(run.iterates, np.tile(c, (11, 1)))


def test_prediction_beats_running_gradient_on_scalar():
    prob, ws, _ = build_scalar()
    grid = SamplingGrid.covering(0.1, 40.0)
    x0 = np.zeros(1)
    ref = reference_trajectory(prob, ws, grid, x0)
    base = SolverConfig(alpha=0.56, beta=0.56, P=0, C=3)
    pc = with_counts(base, P=1)
    e0 = run_cfopc(prob, ws, grid, base, x0, ref).errors[200:].max()
    e1 = run_cfopc(prob, ws, grid, pc, x0, ref).errors[200:].max()
    assert e1 < e0


def test_backward_mode_needs_no_analytic_mixed_derivative():
    base = quadratic_problem(np.eye(1), drift=lambda t: (np.array([math.sin(t)]), np.array([math.cos(t)])))
    p = FunctionProblem(dim=1, value_fn=base.value, gradient_fn=base.gradient,
                        hessian_vec_fn=base.hessian_vec, constants=base.constants)
    grid = SamplingGrid(0.05, 200)
    with pytest.raises(ValueError, match="backward"):
        run_ufopc(p, grid, SolverConfig(alpha=0.5, beta=0.5, P=1, C=1), np.zeros(1))
    run = run_ufopc(p, grid, SolverConfig(alpha=0.5, beta=0.5, P=1, C=1, derivative_mode=BACKWARD), np.zeros(1))
    assert np.all(np.isfinite(run.iterates))


def test_divergence_raises_with_partial_run():
    prob, ws, _ = build_scalar()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(DivergenceError) as info:
            run_tracking(prob, ws, SamplingGrid(0.1, 400), SolverConfig(alpha=10, beta=10, P=1, C=3), np.zeros(1))
    err = info.value
    assert err.step is not None and err.run.diverged and err.run.diverged_at == err.step


def test_large_stepsize_warns():
    p = quadratic_problem(np.eye(1))
    with pytest.warns(RuntimeWarning, match="2/L"):
        run_ufopc(p, SamplingGrid(0.1, 2), SolverConfig(alpha=2.0, beta=0.5, P=1, C=1), np.zeros(1))


def test_infeasible_x0_is_projected_with_warning():
    p = quadratic_problem(np.eye(2))
    box = Box.uniform(2, 0, 1)
    with pytest.warns(RuntimeWarning, match="outside"):
        run = run_cfopc(p, box, SamplingGrid(0.1, 2), SolverConfig(alpha=0.5, beta=0.5), np.array([2.0, -1.0]))
    np.testing.assert_array_equal(run.iterates[0], [1.0, 0.0])


def test_correction_plus_extra_differs_from_total_correction():
    prob, ws, _ = build_scalar()
    grid = SamplingGrid(0.1, 50)
    x0 = np.zeros(1)
    ce = run_ufopc(prob, grid, SolverConfig(alpha=0.5, beta=0.5, P=0, C=2, extra_corrections=2), x0)
    tc = run_ufopc(prob, grid, SolverConfig(alpha=0.5, beta=0.5, P=0, C=4), x0)
    assert not np.array_equal(ce.iterates, tc.iterates)
    # the extra corrections run on f(t_k) and their result is the recorded prediction
    x1 = ce.iterates[1]
    np.testing.assert_array_equal(ce.predicted[2], correct(prob, ws, x1, grid.time(1), 0.5, 2))
