"""Fractional integrals of the Jacobi basis and the memory-kernel tables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import JacobiRule, gauss_legendre_rule
from .mesh import Mesh

__all__ = [
    "StageTables",
    "rl_basis_integral",
    "rl_basis_row",
    "memory_kernel_integral",
    "memory_kernel_rows",
    "lag_arguments",
    "build_stage_tables",
]

# Gauss-Legendre points used for smooth kernels; never fewer than this
MIN_GL_POINTS = 22


def rl_basis_row(rule: JacobiRule, c, s: int) -> np.ndarray:
    """``I^alpha P_j(c)`` for ``j < s``, vectorised over ``c`` in [0, 1].

    Uses ``I^alpha P_j(c) = c^alpha / Gamma(alpha + 1) * sum_i b_i P_j(c c_i)``,
    which is exact for ``j <= 2k - 1``.
    """
    c = np.asarray(c, dtype=float)
    if np.any((c < 0) | (c > 1)):
        raise ValueError("rl_basis_integral needs c in [0, 1]; use memory_kernel_integral beyond")
    vals = rule.eval(c[..., None] * rule.nodes, s)  # (..., k, s)
    quad = np.einsum("i,...ij->...j", rule.weights, vals)
    scale = c ** rule.alpha / math.gamma(rule.alpha + 1.0)
    return scale[..., None] * quad


def rl_basis_integral(rule: JacobiRule, j: int, c: float) -> float:
    """Riemann-Liouville integral ``I^alpha P_j`` evaluated at ``c``."""
    if j < 0 or j > 2 * rule.k - 1:
        raise ValueError(f"degree {j} is outside the exactness range of the rule")
    return float(rl_basis_row(rule, c, j + 1)[..., j])


def _gl_points(rule):
    return gauss_legendre_rule(max(rule.k, MIN_GL_POINTS))


def _kernel_smooth(rule, a, s):
    # a >= 2: the kernel is analytic on [0, 1] with a margin of at least 1
    x, w = _gl_points(rule)
    vals = rule.eval(x, s)  # (n, s)
    ker = (a[:, None] - x[None, :]) ** (rule.alpha - 1.0) * w
    return ker @ vals


def _kernel_near(rule, a, s):
    # 1 < a < 2: panels whose width doubles away from tau = 1, each as wide as
    # its distance to the singularity tau = a
    x, w = _gl_points(rule)
    out = np.zeros((a.size, s))
    for idx, av in enumerate(a):
        d = av - 1.0
        right = 1.0
        width = d
        while right > 0.0:
            left = max(right - width, 0.0)
            tau = left + (right - left) * x
            ker = (av - tau) ** (rule.alpha - 1.0) * w * (right - left)
            out[idx] += ker @ rule.eval(tau, s)
            right = left
            width *= 2.0
    return out


def _kernel_at_one(rule, s):
    # int_0^1 (1 - tau)^(alpha-1) P_j = (1/alpha) sum_i b_i P_j(c_i)
    return rule.weights @ rule.eval(rule.nodes, s) / rule.alpha


def _kernel_split(rule, a, s):
    # exact split int_0^a - int_1^a; only well conditioned for small degrees
    # or a close to 1 since P_j grows quickly outside [0, 1]
    al = rule.alpha
    first = rule.eval(a[:, None] * rule.nodes, s)
    second = rule.eval(1.0 + (a[:, None] - 1.0) * rule.nodes, s)
    return (a[:, None] ** al * np.einsum("i,aij->aj", rule.weights, first)
            - (a[:, None] - 1.0) ** al * np.einsum("i,aij->aj", rule.weights, second)) / al


def memory_kernel_rows(rule: JacobiRule, a, s: int, method: str = "auto") -> np.ndarray:
    """``int_0^1 (a - tau)^(alpha-1) P_j(tau) dtau`` for ``j < s``.

    ``a`` may be an array (all entries >= 1); the result has shape
    ``a.shape + (s,)``. ``method`` selects the algorithm: ``"auto"`` uses the
    exact Gauss-Jacobi identity at ``a == 1``, graded composite Gauss-Legendre
    for ``1 < a < 2`` and plain Gauss-Legendre for ``a >= 2``. ``"smooth"``,
    ``"near"`` and ``"split"`` force one algorithm (used for cross-checks).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 1.0) or not np.all(np.isfinite(a)):
        raise ValueError("memory kernel needs a >= 1")
    flat = a.ravel()
    out = np.empty((flat.size, s))
    if method == "smooth":
        out[:] = _kernel_smooth(rule, flat, s)
    elif method == "near":
        out[:] = _kernel_near(rule, flat, s)
    elif method == "split":
        out[:] = _kernel_split(rule, flat, s)
    elif method == "auto":
        one = flat == 1.0
        near = (flat > 1.0) & (flat < 2.0)
        far = flat >= 2.0
        if one.any():
            out[one] = _kernel_at_one(rule, s)
        if near.any():
            out[near] = _kernel_near(rule, flat[near], s)
        if far.any():
            out[far] = _kernel_smooth(rule, flat[far], s)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out.reshape(a.shape + (s,))


def memory_kernel_integral(rule: JacobiRule, a: float, j: int) -> float:
    """Scalar convenience wrapper around :func:`memory_kernel_rows`."""
    return float(memory_kernel_rows(rule, a, j + 1)[..., j])


def lag_arguments(mesh: Mesh, q, c):
    """Kernel offset ``xi_q + c rho_q`` for lag ``q = n - nu``.

    Graded meshes have ``xi_q = (r^q - 1)/(r - 1)`` and ``rho_q = r^q``;
    uniform meshes ``xi_q = q`` and ``rho_q = 1``.
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    if mesh.kind == "graded":
        r = mesh.r
        rq = r ** q
        return np.expm1(q * np.log(r)) / (r - 1.0) + c * rq
    return q + c


@dataclass(frozen=True)
class StageTables:
    """Per-solve tables shared by every step.

    ``memory_mats[q - 1]`` holds the kernel integrals for lag ``q`` at the
    quadrature nodes (rows ``0..k-1``) and at ``c = 1`` (row ``k``).
    """

    alpha: float
    s: int
    k: int
    P_at_nodes: np.ndarray
    frac_int_matrix: np.ndarray
    frac_int_at_one: np.ndarray
    memory_mats: np.ndarray
    mesh_kind: str


def build_stage_tables(rule: JacobiRule, s: int, mesh: Mesh) -> StageTables:
    """Precompute everything a solve on ``mesh`` needs from the basis."""
    if not 1 <= s <= rule.k:
        raise ValueError(f"need 1 <= s <= k, got s={s}, k={rule.k}")
    nodes = rule.nodes
    P = rule.eval(nodes, s)
    A = rl_basis_row(rule, nodes, s)
    at_one = np.zeros(s)
    at_one[0] = 1.0 / math.gamma(rule.alpha + 1.0)

    n_lags = mesh.N - 1
    cs = np.append(nodes, 1.0)
    if n_lags > 0:
        q = np.arange(1, n_lags + 1)
        args = lag_arguments(mesh, q[:, None], cs[None, :])
        mats = memory_kernel_rows(rule, args, s)
    else:
        mats = np.zeros((0, rule.k + 1, s))
    for arr in (P, A, at_one, mats):
        arr.setflags(write=False)
    return StageTables(rule.alpha, s, rule.k, P, A, at_one, mats, mesh.kind)
