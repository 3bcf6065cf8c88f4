"""FHBVM(k, s) stepping for Caputo FDE initial value problems.

On each interval ``[t_{n-1}, t_n]`` the vector field is expanded in ``s``
orthonormal Jacobi modes. The local solution is

    sigma_n(c h_n) = phi_{n-1}(c) + h_n^alpha sum_j I^alpha P_j(c) gamma_j^n,

where the memory term ``phi_{n-1}`` collects the initial Taylor polynomial and
the contributions of all previous intervals, and the coefficients
``gamma_j^n`` solve a nonlinear system discretised by the k-point
Gauss-Jacobi rule.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .basis import JacobiRule, gauss_jacobi_rule
from .fracint import StageTables, build_stage_tables, lag_arguments, memory_kernel_rows, rl_basis_row
from .mesh import Mesh, build_graded, build_uniform, build_graded_first_step

__all__ = [
    "FdeProblem",
    "FourierHistory",
    "SolveOptions",
    "SolveResult",
    "SolveStats",
    "StepFailure",
    "EvaluationError",
    "initial_polynomial",
    "memory_term",
    "solve_stage_system",
    "step_endpoint",
    "dense_eval",
    "select_mesh",
    "solve",
]

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


class StepFailure(RuntimeError):
    """The stage iteration did not converge on some step."""

    def __init__(self, msg, step=None, time=None):
        super().__init__(msg)
        self.step = step
        self.time = time


class EvaluationError(ArithmeticError):
    """The right-hand side returned NaN or Inf."""


@dataclass(frozen=True)
class FdeProblem:
    """``D^alpha y = f(t, y)`` (Caputo) on ``[0, T]`` with ``y^(i)(0) = y0[i]``.

    ``rhs(t, y)`` returns the m-vector ``f``; with ``vectorized=True`` it is
    called with ``t`` of shape ``(k,)`` and ``y`` of shape ``(k, m)`` and must
    return ``(k, m)``. ``jac(t, y)`` returns the ``m x m`` Jacobian for a
    single point. Both must be pure.
    """

    alpha: float
    y0: np.ndarray
    T: float
    rhs: Callable
    jac: Optional[Callable] = None
    exact: Optional[Callable] = None
    vectorized: bool = False

    def __post_init__(self):
        alpha = float(self.alpha)
        if not alpha > 0 or alpha == round(alpha):
            raise ValueError(f"alpha must be positive and non-integer, got {self.alpha!r}")
        y0 = np.atleast_2d(np.asarray(self.y0, dtype=float))
        if y0.shape[0] != self.ell:
            raise ValueError(f"y0 needs {self.ell} rows (one per initial derivative) for alpha={alpha}, "
                             f"got shape {y0.shape}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "alpha", alpha)

    @property
    def ell(self) -> int:
        return math.ceil(self.alpha)

    @property
    def m(self) -> int:
        return self.y0.shape[1]

    def f(self, t, y):
        """Evaluate the right-hand side at stage times ``t`` (k,) and values ``y`` (k, m)."""
        if self.vectorized:
            out = np.asarray(self.rhs(t, y), dtype=float).reshape(y.shape)
        else:
            out = np.array([np.asarray(self.rhs(ti, yi), dtype=float).reshape(-1) for ti, yi in zip(t, y)])
        if not np.all(np.isfinite(out)):
            raise EvaluationError("right-hand side produced NaN or Inf")
        return out

    def jacobian(self, t, y):
        if self.jac is not None:
            return np.asarray(self.jac(t, y), dtype=float).reshape(self.m, self.m)
        # forward differences, step sqrt(eps) (1 + |y|)
        y = np.asarray(y, dtype=float)
        f0 = self.f(np.array([t]), y[None, :])[0]
        J = np.empty((self.m, self.m))
        for p in range(self.m):
            dy = math.sqrt(EPS) * (1.0 + abs(y[p]))
            yp = y.copy()
            yp[p] += dy
            J[:, p] = (self.f(np.array([t]), yp[None, :])[0] - f0) / dy
        return J


@dataclass
class FourierHistory:
    """Discrete Fourier coefficients ``gamma^nu`` (s x m) of every finished step."""

    gammas: np.ndarray  # (N, s, m), filled up to the current step
    steps: np.ndarray  # h_nu
    count: int = 0

    def append(self, gamma):
        self.gammas[self.count] = gamma
        self.count += 1


@dataclass
class SolveStats:
    n_rhs: int = 0
    n_jac: int = 0
    iterations: list = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class SolveOptions:
    """Solver settings; defaults reproduce FHBVM(22, 20).

    ``mesh`` is ``"auto"``, ``"graded"`` or ``"uniform"``. For graded meshes
    ``r`` fixes the ratio; otherwise the ratio is derived from the first step
    ``h1`` (default :func:`default_first_step`).
    """

    mesh: str = "auto"
    r: Optional[float] = None
    h1: Optional[float] = None
    k: int = 22
    s: int = 20
    error_estimate: bool = False
    iteration: str = "newton"
    tol: float = 1e-14
    max_iters: int = 50


@dataclass
class SolveResult:
    mesh: Mesh
    endpoints: np.ndarray
    history: FourierHistory
    rule: JacobiRule
    s: int
    problem: FdeProblem
    err_estimate: Optional[np.ndarray] = None
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def t(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def y(self) -> np.ndarray:
        return self.endpoints


def initial_polynomial(problem: FdeProblem, t) -> np.ndarray:
    """``sum_{i < ell} t^i / i! * y0[i]``; ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (problem.m,))
    for i in range(problem.ell):
        out += (t[..., None] ** i / math.factorial(i)) * problem.y0[i]
    return out


def memory_term(history: FourierHistory, tables: StageTables, n: int, where: str = "at_nodes",
                problem: FdeProblem | None = None, mesh: Mesh | None = None) -> np.ndarray:
    """Memory term ``phi_{n-1}`` at the quadrature nodes (k x m) or at c = 1 (1 x m).

    Without ``problem`` only the history sum is returned (the initial
    polynomial is left out); ``mesh`` is then needed only for the times of
    that polynomial and may be omitted as well.
    """
    if history.count < n - 1:
        raise ValueError(f"history holds {history.count} steps, step {n} needs {n - 1}")
    if n - 1 > len(tables.memory_mats):
        raise RuntimeError(f"stage tables cover lags up to {len(tables.memory_mats)}, step {n} needs {n - 1}")
    rows = slice(0, tables.k) if where == "at_nodes" else slice(tables.k, tables.k + 1)
    m = history.gammas.shape[2]
    acc = np.zeros((tables.k if where == "at_nodes" else 1, m))
    if n > 1:
        mats = tables.memory_mats[n - 2::-1, rows, :]  # lags n-1 .. 1
        weighted = history.gammas[: n - 1] * (history.steps[: n - 1] ** tables.alpha)[:, None, None]
        acc = np.einsum("vis,vsm->im", mats, weighted) / math.gamma(tables.alpha)
    if problem is not None:
        t0 = mesh.nodes[n - 1]
        h = history.steps[n - 1]
        if where == "at_nodes":
            c = _nodes_from_tables(problem, tables)
            acc = acc + initial_polynomial(problem, t0 + c * h)
        else:
            acc = acc + initial_polynomial(problem, np.array([mesh.nodes[n]]))
    return acc


def _nodes_from_tables(problem, tables):
    return gauss_jacobi_rule(tables.alpha, tables.k).nodes


def step_endpoint(phi_at_one, h: float, gamma0, alpha: float) -> np.ndarray:
    """``phi(1) + h^alpha gamma_0 / Gamma(alpha + 1)``."""
    return np.asarray(phi_at_one) + h ** alpha * np.asarray(gamma0) / math.gamma(alpha + 1.0)


def _newton_matrix(C, J, ha):
    s, m = C.shape[0], J.shape[0]
    return np.eye(s * m) - ha * np.kron(C, J)


def solve_stage_system(problem: FdeProblem, phi_at_nodes, t_base: float, h: float, tables: StageTables,
                       guess, *, nodes=None, weights=None, iteration: str = "newton", tol: float = 1e-14,
                       max_iters: int = 50, stats: SolveStats | None = None, step: int | None = None):
    """Solve ``gamma = B f(t_base + c h, phi + h^alpha A gamma)`` for one step.

    ``B[j, i] = b_i P_j(c_i)`` and ``A[i, l] = I^alpha P_l(c_i)``. The
    simplified Newton iteration freezes the Jacobian at the predictor stage
    value of the first node and refactors only if the iteration stalls.
    Returns ``(gamma, iterations)``; the count is the number of right-hand
    side sweeps after the initial one.

    Raises
    ------
    StepFailure
        No convergence within ``max_iters`` or a non-finite iterate.
    EvaluationError
        The right-hand side returned NaN or Inf.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if nodes is None or weights is None:
        rule = gauss_jacobi_rule(tables.alpha, tables.k)
        nodes, weights = rule.nodes, rule.weights
    stats = stats if stats is not None else SolveStats()
    A = tables.frac_int_matrix
    B = (weights[:, None] * tables.P_at_nodes).T
    ha = h ** tables.alpha
    times = t_base + nodes * h
    gamma = np.array(guess, dtype=float, copy=True)
    s, m = gamma.shape

    def residual(g):
        U = phi_at_nodes + ha * (A @ g)
        F = problem.f(times, U)
        stats.n_rhs += 1
        return g - B @ F, U

    G, U = residual(gamma)
    lu = None
    refreshed = False
    if iteration == "newton":
        C = B @ A
        J = problem.jacobian(times[0], U[0])
        stats.n_jac += 1
        lu = lu_factor(_newton_matrix(C, J, ha))
    elif iteration != "fixed_point":
        raise ValueError(f"unknown iteration {iteration!r}")

    def increment(G):
        return -lu_solve(lu, G.ravel()).reshape(s, m) if lu is not None else -G

    delta = increment(G)
    prev = math.inf
    slow = 0
    for it in range(1, max_iters + 1):
        gamma = gamma + delta
        if not np.all(np.isfinite(gamma)):
            raise StepFailure(f"stage iteration diverged at step {step}", step=step, time=t_base)
        G, U = residual(gamma)
        delta = increment(G)
        nd = np.max(np.abs(delta))
        scale = 1.0 + np.max(np.abs(gamma))
        if nd <= tol * scale:
            return gamma + delta, it
        # increments that stopped shrinking at rounding level count as converged
        if nd >= prev and nd <= 1e3 * tol * scale:
            return gamma, it
        slow = slow + 1 if nd > 0.9 * prev else 0
        prev = nd
        if lu is not None and slow >= 3 and not refreshed:
            J = problem.jacobian(times[0], U[0])
            stats.n_jac += 1
            lu = lu_factor(_newton_matrix(C, J, ha))
            refreshed = True
            slow = 0
            delta = increment(G)
    raise StepFailure(f"stage iteration did not converge in {max_iters} iterations at step {step} "
                      f"(t = {t_base:.6g})", step=step, time=t_base)


def default_first_step(problem: FdeProblem, M: int) -> float:
    """First graded step: small enough that the weakly singular start is
    resolved to about machine precision, ``h_1 = T eps^(1/(2 min(alpha, 1)))``.
    """
    expo = 1.0 / (2.0 * min(problem.alpha, 1.0))
    return problem.T * EPS ** expo


def build_mesh(problem: FdeProblem, M: int, kind: str, r: float | None = None,
               h1: float | None = None) -> Mesh:
    if kind == "uniform":
        return build_uniform(problem.T, M)
    if kind == "graded":
        if r is not None:
            return build_graded(problem.T, M, r)
        h1 = default_first_step(problem, M) if h1 is None else h1
        return build_graded_first_step(problem.T, M, h1)
    raise ValueError(f"unknown mesh kind {kind!r}")


def _march(problem: FdeProblem, mesh: Mesh, opts: SolveOptions) -> SolveResult:
    t_start = time.perf_counter()
    rule = gauss_jacobi_rule(problem.alpha, opts.k)
    tables = build_stage_tables(rule, opts.s, mesh)
    N, m, s = mesh.N, problem.m, opts.s
    steps = mesh.steps
    history = FourierHistory(np.zeros((N, s, m)), steps)
    Y = np.empty((N + 1, m))
    Y[0] = problem.y0[0]
    stats = SolveStats()
    gamma = np.zeros((s, m))
    for n in range(1, N + 1):
        h = steps[n - 1]
        phi_nodes = memory_term(history, tables, n, "at_nodes", problem, mesh)
        phi_one = memory_term(history, tables, n, "at_one", problem, mesh)[0]
        gamma, iters = solve_stage_system(
            problem, phi_nodes, mesh.nodes[n - 1], h, tables, gamma,
            nodes=rule.nodes, weights=rule.weights, iteration=opts.iteration,
            tol=opts.tol, max_iters=opts.max_iters, stats=stats, step=n)
        stats.iterations.append(iters)
        history.append(gamma)
        Y[n] = step_endpoint(phi_one, h, gamma[0], problem.alpha)
    stats.wall_time = time.perf_counter() - t_start
    return SolveResult(mesh, Y, history, rule, s, problem, stats=stats)


def dense_eval(result: SolveResult, t) -> np.ndarray:
    """Evaluate the piecewise approximation ``sigma`` at ``t`` in ``[0, T]``."""
    t = float(t)
    mesh = result.mesh
    if not 0.0 <= t <= mesh.T:
        raise ValueError(f"t={t!r} is outside [0, {mesh.T}]")
    if t == 0.0:
        return result.endpoints[0].copy()
    problem, rule, s = result.problem, result.rule, result.s
    n = int(np.searchsorted(mesh.nodes, t, side="left"))
    n = min(max(n, 1), mesh.N)
    steps = result.history.steps
    c = min(max((t - mesh.nodes[n - 1]) / steps[n - 1], 0.0), 1.0)
    alpha = problem.alpha
    G = result.history.gammas
    val = initial_polynomial(problem, t)
    if n > 1:
        lags = np.arange(n - 1, 0, -1)  # nu = 1 .. n-1
        rows = memory_kernel_rows(rule, lag_arguments(mesh, lags, c), s)
        weighted = G[: n - 1] * (steps[: n - 1] ** alpha)[:, None, None]
        val = val + np.einsum("vs,vsm->m", rows, weighted) / math.gamma(alpha)
    local = rl_basis_row(rule, np.array(c), s)
    return val + steps[n - 1] ** alpha * (local @ G[n - 1])


def _with_estimate(problem, mesh, M, opts, coarse: SolveResult) -> SolveResult:
    fine_mesh = build_mesh(problem, 2 * M, mesh.kind, opts.r, opts.h1)
    fine = _march(problem, fine_mesh, opts)
    est = np.empty_like(coarse.endpoints)
    est[0] = 0.0
    for n in range(1, mesh.N + 1):
        est[n] = np.abs(coarse.endpoints[n] - dense_eval(fine, mesh.nodes[n]))
    coarse.err_estimate = est
    return coarse


def _probe(problem: FdeProblem, M: int, opts: SolveOptions):
    results = {}
    for kind in ("graded", "uniform"):
        if kind == "graded" and M < 2:
            continue
        try:
            mesh = build_mesh(problem, M, kind, opts.r, opts.h1)
            res = _march(problem, mesh, opts)
            results[kind] = _with_estimate(problem, mesh, M, opts, res)
        except (StepFailure, EvaluationError) as exc:
            log.info("probe on %s mesh failed: %s", kind, exc)
    if not results:
        raise StepFailure("both candidate meshes failed")
    if len(results) == 1:
        return next(iter(results.values()))
    g, u = results["graded"], results["uniform"]
    eg, eu = np.max(g.err_estimate), np.max(u.err_estimate)
    scale = 1.0 + max(np.max(np.abs(g.endpoints)), np.max(np.abs(u.endpoints)))
    floor = 50 * EPS * scale
    if (eg <= floor and eu <= floor) or eu <= 2.0 * eg:
        return u
    return g


def select_mesh(problem: FdeProblem, M: int, opts: SolveOptions | None = None) -> Mesh:
    """Pick the mesh kind for ``problem`` at resolution ``M``.

    A forced kind is built directly. Otherwise both kinds are solved with the
    doubled-mesh estimator and the one with the smaller estimated error wins;
    estimates within a factor 2 (or both at rounding level) go to uniform.
    """
    opts = opts or SolveOptions()
    if opts.mesh in ("graded", "uniform"):
        return build_mesh(problem, M, opts.mesh, opts.r, opts.h1)
    return _probe(problem, M, opts).mesh


def solve(problem: FdeProblem, M: int, opts: SolveOptions | None = None, **kwargs) -> SolveResult:
    """Integrate ``problem`` on a mesh whose largest step is about ``T / M``.

    Keyword arguments override fields of ``opts``. With
    ``error_estimate=True`` the result carries ``|y_n - y_fine(t_n)|`` where
    the fine solution uses ``2 M``.
    """
    opts = replace(opts or SolveOptions(), **kwargs)
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 1 <= opts.s <= opts.k:
        raise ValueError(f"need 1 <= s <= k, got s={opts.s}, k={opts.k}")
    t0 = time.perf_counter()
    if opts.mesh == "auto":
        res = _probe(problem, M, opts)
        if not opts.error_estimate:
            res.err_estimate = None
    else:
        mesh = build_mesh(problem, M, opts.mesh, opts.r, opts.h1)
        res = _march(problem, mesh, opts)
        if opts.error_estimate:
            res = _with_estimate(problem, mesh, M, opts, res)
    res.stats.wall_time = time.perf_counter() - t0
    return res
