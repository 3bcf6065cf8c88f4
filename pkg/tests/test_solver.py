import math

import numpy as np
import pytest

from fhbvm.basis import gauss_jacobi_rule
from fhbvm.fracint import build_stage_tables
from fhbvm.mesh import build_uniform
from fhbvm.problems import EX4_MATRIX, get_problem
from fhbvm.solver import (EvaluationError, FdeProblem, FourierHistory, SolveOptions, StepFailure, dense_eval,
                          initial_polynomial, memory_term, select_mesh, solve, solve_stage_system, step_endpoint)


def const_problem(alpha=0.5, y0=0.0, T=1.0):
    # D^alpha y = 1, y = y0 + t^alpha / Gamma(alpha + 1)
    ell = math.ceil(alpha)
    init = np.zeros((ell, 1))
    init[0, 0] = y0
    return FdeProblem(alpha, init, T, lambda t, y: np.ones_like(y), lambda t, y: np.zeros((1, 1)),
                      lambda t: np.array([y0 + t ** alpha / math.gamma(alpha + 1)]), vectorized=True)


def poly_problem(alpha, coeffs, T=1.0):
    # D^alpha y = sum_q a_q t^q from zero data; y = sum_q a_q q!/Gamma(q+1+alpha) t^(q+alpha)
    coeffs = np.asarray(coeffs, dtype=float)

    def rhs(t, y):
        return np.polynomial.polynomial.polyval(np.asarray(t), coeffs)[:, None] + 0 * y

    def exact(t):
        return np.array([sum(a * math.gamma(q + 1) / math.gamma(q + 1 + alpha) * t ** (q + alpha)
                             for q, a in enumerate(coeffs))])

    return FdeProblem(alpha, np.zeros((math.ceil(alpha), 1)), T, rhs, lambda t, y: np.zeros((1, 1)), exact,
                      vectorized=True)


def test_initial_polynomial_examples():
    p1 = const_problem(0.5, y0=0.7)
    np.testing.assert_array_equal(initial_polynomial(p1, np.array([0.0, 0.3, 5.0]))[:, 0], 0.7)
    ex2 = get_problem("ex2").problem
    np.testing.assert_array_equal(initial_polynomial(ex2, np.array([0.0, 0.4, 1.0]))[:, 0], -1.0)
    lin = FdeProblem(1.5, np.array([[0.0], [1.0]]), 3.0, lambda t, y: y)
    assert initial_polynomial(lin, 2.0)[0] == 2.0


def _setup(alpha=0.5, M=2):
    prob = const_problem(alpha, y0=0.3)
    mesh = build_uniform(1.0, M)
    rule = gauss_jacobi_rule(alpha, 22)
    tables = build_stage_tables(rule, 20, mesh)
    hist = FourierHistory(np.zeros((mesh.N, 20, 1)), mesh.steps)
    return prob, mesh, rule, tables, hist


def test_memory_term_first_step_is_initial_polynomial():
    prob, mesh, rule, tables, hist = _setup()
    phi = memory_term(hist, tables, 1, "at_nodes", prob, mesh)
    np.testing.assert_array_equal(phi, 0.3)
    assert memory_term(hist, tables, 1, "at_one", prob, mesh)[0, 0] == 0.3


def test_memory_term_zero_history():
    prob, mesh, rule, tables, hist = _setup()
    hist.append(np.zeros((20, 1)))
    np.testing.assert_array_equal(memory_term(hist, tables, 2, "at_nodes", prob, mesh), 0.3)


def test_memory_term_one_uniform_step():
    alpha = 0.5
    prob, mesh, rule, tables, hist = _setup(alpha)
    g = np.zeros((20, 1))
    g[0] = 1.0
    hist.append(g)
    h = mesh.h1
    expect = 0.3 + h ** alpha / math.gamma(alpha) * (2 ** alpha - 1) / alpha
    assert memory_term(hist, tables, 2, "at_one", prob, mesh)[0, 0] == pytest.approx(expect, rel=1e-14)


def test_memory_term_requires_history():
    prob, mesh, rule, tables, hist = _setup()
    with pytest.raises(ValueError):
        memory_term(hist, tables, 2, "at_nodes", prob, mesh)


def test_step_endpoint_examples():
    np.testing.assert_array_equal(step_endpoint(np.array([0.4]), 0.1, np.array([0.0]), 0.5), [0.4])
    v = step_endpoint(np.array([0.0]), 1.0, np.array([1.0]), 0.5)
    assert v[0] == pytest.approx(2 / math.sqrt(math.pi), rel=1e-15)
    assert v[0] == pytest.approx(1.128379, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.3])
def test_one_step_of_constant_rhs_is_exact(alpha):
    prob = const_problem(alpha)
    res = solve(prob, 1, mesh="uniform")
    assert res.y[1, 0] == pytest.approx(1 / math.gamma(alpha + 1), rel=1e-14)


@pytest.mark.parametrize("iteration", ["newton", "fixed_point"])
def test_constant_rhs_converges_in_one_iteration(iteration):
    v = np.array([2.0, -3.0])
    prob = FdeProblem(0.5, np.zeros((1, 2)), 1.0, lambda t, y: np.tile(v, (len(t), 1)), vectorized=True)
    _, mesh, rule, tables, _ = _setup()
    gamma, iters = solve_stage_system(prob, np.zeros((22, 2)), 0.0, 0.5, tables, np.zeros((20, 2)),
                                      iteration=iteration)
    assert iters == 1
    np.testing.assert_allclose(gamma[0], v, rtol=1e-14)
    assert np.max(np.abs(gamma[1:])) <= 1e-14


def _linear_oracle(Lam, phi, h, tables, rule):
    # (I - h^a C kron Lam) vec(Gamma) = vec(B (phi Lam^T)), with Gamma stored row-major (s, m)
    B = (rule.weights[:, None] * tables.P_at_nodes).T
    C = B @ tables.frac_int_matrix
    s, m = C.shape[0], Lam.shape[0]
    K = np.eye(s * m) - h ** tables.alpha * np.kron(C, Lam)
    return np.linalg.solve(K, (B @ (phi @ Lam.T)).ravel()).reshape(s, m)


@pytest.mark.parametrize("lam", [-1.0, -50.0, 3.0])
def test_linear_scalar_stage_solve_matches_dense_solve(lam):
    alpha, h = 0.5, 0.3
    prob = FdeProblem(alpha, np.array([[1.0]]), 1.0, lambda t, y: lam * y, lambda t, y: np.array([[lam]]),
                      vectorized=True)
    rule = gauss_jacobi_rule(alpha, 22)
    tables = build_stage_tables(rule, 20, build_uniform(1.0, 3))
    phi = 1.0 + 0.1 * rule.nodes[:, None]
    gamma, _ = solve_stage_system(prob, phi, 0.0, h, tables, np.zeros((20, 1)))
    ref = _linear_oracle(np.array([[lam]]), phi, h, tables, rule)
    assert np.max(np.abs(gamma - ref)) <= 1e-13 * (1 + np.max(np.abs(ref)))


@pytest.mark.parametrize("h", [1e-6, 0.05, 1.0])
def test_ex4_stage_solve_matches_dense_solve(h):
    bp = get_problem("ex4")
    prob = bp.problem
    rule = gauss_jacobi_rule(prob.alpha, 22)
    tables = build_stage_tables(rule, 20, build_uniform(20.0, 20))
    phi = np.tile(prob.y0[0], (22, 1))
    gamma, _ = solve_stage_system(prob, phi, 0.0, h, tables, np.zeros((20, 2)))
    ref = _linear_oracle(EX4_MATRIX, phi, h, tables, rule)
    assert np.max(np.abs(gamma - ref)) <= 1e-12 * (1 + np.max(np.abs(ref)))


def test_ex4_first_step_needs_newton():
    prob = get_problem("ex4").problem
    rule = gauss_jacobi_rule(prob.alpha, 22)
    mesh = build_uniform(20.0, 20)
    tables = build_stage_tables(rule, 20, mesh)
    phi = np.tile(prob.y0[0], (22, 1))
    C = (rule.weights[:, None] * tables.P_at_nodes).T @ tables.frac_int_matrix
    # the fixed-point map contracts only if h^alpha 100 ||C|| < 1; here it is far above
    assert mesh.h1 ** prob.alpha * 100 * np.max(np.abs(np.linalg.eigvals(C))) > 1
    with pytest.raises(StepFailure) as info:
        solve_stage_system(prob, phi, 0.0, mesh.h1, tables, np.zeros((20, 2)), iteration="fixed_point", step=1)
    assert info.value.step == 1
    gamma, iters = solve_stage_system(prob, phi, 0.0, mesh.h1, tables, np.zeros((20, 2)))
    assert iters <= 50 and np.all(np.isfinite(gamma))


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.25, 1.5])
@pytest.mark.parametrize("kind", ["uniform", "graded"])
def test_polynomial_rhs_is_integrated_exactly(alpha, kind):
    rng = np.random.default_rng(3)
    coeffs = rng.uniform(-1, 1, 20)  # degree s - 1 = 19
    prob = poly_problem(alpha, coeffs)
    res = solve(prob, 4, mesh=kind)
    ref = np.array([prob.exact(t) for t in res.t])
    assert np.max(np.abs(res.y - ref)) <= 1e-11


@pytest.mark.parametrize("kind", ["uniform", "graded"])
def test_dense_output_at_mesh_points(kind):
    bp = get_problem("ex1")
    res = solve(bp.problem, 4, mesh=kind)
    for n in range(res.mesh.N + 1):
        np.testing.assert_allclose(dense_eval(res, res.t[n]), res.y[n], rtol=1e-13, atol=1e-13)
    assert np.array_equal(dense_eval(res, 0.0), bp.problem.y0[0])


@pytest.mark.parametrize("kind", ["uniform", "graded"])
def test_dense_output_matches_analytic_solution(kind):
    alpha = 0.6
    prob = const_problem(alpha, y0=0.2)
    res = solve(prob, 3, mesh=kind)
    for t in np.random.default_rng(11).uniform(0, 1, 20):
        assert dense_eval(res, t)[0] == pytest.approx(prob.exact(t)[0], abs=1e-11)


def test_dense_eval_domain():
    res = solve(const_problem(), 2, mesh="uniform")
    with pytest.raises(ValueError):
        dense_eval(res, 1.5)
    with pytest.raises(ValueError):
        dense_eval(res, -0.1)


def test_fourier_coefficients_reproduce_from_stage_values():
    # recompute gamma_j = sum_i b_i P_j(c_i) f(stage_i) from the converged step data
    bp = get_problem("ex3")
    prob = bp.problem
    res = solve(prob, 3, mesh="uniform")
    rule = res.rule
    tables = build_stage_tables(rule, res.s, res.mesh)
    hist = FourierHistory(np.zeros_like(res.history.gammas), res.history.steps)
    B = (rule.weights[:, None] * tables.P_at_nodes).T
    for n in range(1, res.mesh.N + 1):
        h = res.mesh.steps[n - 1]
        phi = memory_term(hist, tables, n, "at_nodes", prob, res.mesh)
        g = res.history.gammas[n - 1]
        U = phi + h ** prob.alpha * tables.frac_int_matrix @ g
        again = B @ prob.f(res.t[n - 1] + rule.nodes * h, U)
        assert np.max(np.abs(again - g)) <= 1e-13 * (1 + np.max(np.abs(g)))
        hist.append(g)


def test_finite_difference_jacobian_fallback():
    bp = get_problem("ex3")
    p = bp.problem
    nojac = FdeProblem(p.alpha, p.y0, p.T, p.rhs, None, p.exact, vectorized=True)
    y = np.array([0.3, -0.7])
    np.testing.assert_allclose(nojac.jacobian(0.4, y), p.jacobian(0.4, y), atol=1e-7)
    a = solve(p, 3, mesh="uniform").y
    b = solve(nojac, 3, mesh="uniform").y
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_scalar_callable_rhs():
    p = get_problem("ex2").problem
    loose = FdeProblem(p.alpha, p.y0, p.T, lambda t, y: p.rhs(np.array([t]), y[None, :])[0], p.jac, p.exact)
    np.testing.assert_allclose(solve(loose, 3, mesh="uniform").y, solve(p, 3, mesh="uniform").y, atol=1e-15)


def test_step_failure_reports_step():
    p = get_problem("ex1").problem
    with pytest.raises(StepFailure) as info:
        solve(p, 3, mesh="uniform", max_iters=1)
    assert info.value.step == 1 and info.value.time == 0.0


def test_nan_rhs_raises_evaluation_error():
    p = FdeProblem(0.5, np.array([[1.0]]), 1.0, lambda t, y: np.full_like(y, np.nan), vectorized=True)
    with pytest.raises(EvaluationError):
        solve(p, 2, mesh="uniform")


def test_problem_validation():
    with pytest.raises(ValueError):
        FdeProblem(1.0, np.zeros((1, 1)), 1.0, lambda t, y: y)
    with pytest.raises(ValueError):
        FdeProblem(1.5, np.zeros((1, 1)), 1.0, lambda t, y: y)
    with pytest.raises(ValueError):
        FdeProblem(0.5, np.zeros((1, 1)), 0.0, lambda t, y: y)


def test_solve_option_validation():
    p = const_problem()
    with pytest.raises(ValueError):
        solve(p, 2, s=23, k=22)
    with pytest.raises(ValueError):
        solve(p, 0)
    with pytest.raises(ValueError):
        solve(p, 2, mesh="graded", r=2.5)
    with pytest.raises(ValueError):
        solve(p, 2, mesh="uniform", iteration="gauss-seidel")


def test_graded_ratio_override_is_honoured():
    res = solve(get_problem("ex1").problem, 3, mesh="graded", r=1.2)
    assert res.mesh.r == 1.2 and res.mesh.kind == "graded"


def test_error_estimate_shape():
    res = solve(get_problem("ex3").problem, 3, mesh="uniform", error_estimate=True)
    assert res.err_estimate.shape == res.y.shape
    assert np.all(res.err_estimate[0] == 0) and np.all(res.err_estimate >= 0)
    assert solve(get_problem("ex3").problem, 3, mesh="uniform").err_estimate is None


def test_select_mesh_forced_path():
    p = get_problem("ex1").problem
    assert select_mesh(p, 3, SolveOptions(mesh="uniform")).kind == "uniform"
    assert select_mesh(p, 3, SolveOptions(mesh="graded")).kind == "graded"


@pytest.mark.parametrize("pid", ["ex1", "ex2"])
def test_select_mesh_prefers_graded_for_singular_start(pid):
    assert select_mesh(get_problem(pid).problem, 4).kind == "graded"


def test_select_mesh_prefers_uniform_for_smooth_solution():
    # D^1.5 y = t^2 - t^3/2 from rest: y ~ t^3.5, smooth enough that grading buys nothing
    prob = poly_problem(1.5, [0.0, 0.0, 1.0, -0.5])
    assert select_mesh(prob, 4).kind == "uniform"


def test_auto_mesh_result_drops_estimate_unless_requested():
    p = get_problem("ex3").problem
    assert solve(p, 3).err_estimate is None
    assert solve(p, 3, error_estimate=True).err_estimate is not None


def test_warm_start_keeps_iterations_low():
    res = solve(get_problem("ex3").problem, 5, mesh="uniform")
    assert len(res.stats.iterations) == res.mesh.N
    assert max(res.stats.iterations) <= 10
    assert res.stats.n_jac >= res.mesh.N
