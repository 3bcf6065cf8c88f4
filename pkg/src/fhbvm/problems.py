"""The four benchmark FDE-IVPs with exact solutions, plus the mescd metric."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .solver import FdeProblem
from .specfun import gamma_ratio, mittag_leffler

__all__ = ["BenchmarkProblem", "PROBLEMS", "get_problem", "mescd", "residual_check", "MESCD_CAP"]

log = logging.getLogger(__name__)

MESCD_CAP = 17.0


@dataclass(frozen=True)
class BenchmarkProblem:
    id: str
    problem: FdeProblem
    default_alpha: float
    notes: str
    # exact solution as sums of c * t^p per component, when it has that form
    power_terms: tuple | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def alpha(self) -> float:
        return self.problem.alpha

    def exact_on(self, t) -> np.ndarray:
        """Exact solution at each entry of ``t``, shape ``(len(t), m)``; cached."""
        t = np.asarray(t, dtype=float)
        key = t.tobytes()
        if key not in self._cache:
            self._cache[key] = np.array([self.problem.exact(ti) for ti in t]).reshape(len(t), -1)
        return self._cache[key]


# id -> (alpha range, default alpha, alpha fixed?, T, citation)
PROBLEMS = {
    "ex1": ((1.0, 2.0), 1.3, False, 1.0, "Diethelm (2010), Example C.1; y = t^8 - 3 t^(4+a/2) + 9/4 t^a"),
    "ex2": ((1.5, 1.5), 1.5, True, 1.0, "Salati et al. (2023), Example 2; y = t^1.9 - 1"),
    "ex3": ((1.0, 2.0), 1.25, False, 1.0, "Jin et al. (2017), Examples 2-3; y = (t^(3+a), t^(4+a))"),
    "ex4": ((0.0, 1.0), 0.25, False, 20.0, "stiff linear 2x2 system; y via Mittag-Leffler E_a"),
}


def _ex1(alpha):
    g1 = 40320.0 / math.gamma(9.0 - alpha)
    g2 = 3.0 * gamma_ratio(5.0 + alpha / 2, 5.0 - alpha / 2)
    g3 = 2.25 * math.gamma(alpha + 1.0)
    warned = []

    def guard(y):
        if np.any(y < -1e-12) and not warned:
            warned.append(True)
            log.warning("ex1: negative iterate %.3g clipped inside y^(3/2)", float(np.min(y)))
        return np.maximum(y, 0.0)

    def rhs(t, y):
        t = np.asarray(t)[:, None]
        forcing = g1 * t ** (8 - alpha) - g2 * t ** (4 - alpha / 2) + (1.5 * t ** (alpha / 2) - t ** 4) ** 3 + g3
        return -guard(y) ** 1.5 + forcing

    def jac(t, y):
        return np.array([[-1.5 * math.sqrt(max(float(y[0]), 0.0))]])

    def exact(t):
        return np.array([t ** 8 - 3 * t ** (4 + alpha / 2) + 2.25 * t ** alpha])

    prob = FdeProblem(alpha, np.zeros((2, 1)), 1.0, rhs, jac, exact, vectorized=True)
    terms = (((1.0, 8.0), (-3.0, 4 + alpha / 2), (2.25, alpha)),)
    return prob, terms


def _ex2(alpha):
    g = gamma_ratio(2.9, 1.4)

    def rhs(t, y):
        t = np.asarray(t)[:, None]
        return (y ** 2 - (t ** 1.9 - 1) ** 2) / 2 + g * t ** 0.4

    def jac(t, y):
        return np.array([[float(y[0])]])

    def exact(t):
        return np.array([t ** 1.9 - 1])

    prob = FdeProblem(1.5, np.array([[-1.0], [0.0]]), 1.0, rhs, jac, exact, vectorized=True)
    return prob, (((1.0, 1.9), (-1.0, 0.0)),)


def _ex3(alpha):
    g1 = math.gamma(4 + alpha) / 6
    g2 = math.gamma(5 + alpha) / 24

    def rhs(t, y):
        t = np.asarray(t)
        out = np.empty_like(y)
        out[:, 0] = g1 * t ** 3 - t ** (8 + 2 * alpha) + y[:, 1] ** 2
        out[:, 1] = g2 * t ** 4 + t ** (3 + alpha) - y[:, 0]
        return out

    def jac(t, y):
        return np.array([[0.0, 2 * float(y[1])], [-1.0, 0.0]])

    def exact(t):
        return np.array([t ** (3 + alpha), t ** (4 + alpha)])

    prob = FdeProblem(alpha, np.zeros((2, 2)), 1.0, rhs, jac, exact, vectorized=True)
    return prob, (((1.0, 3 + alpha),), ((1.0, 4 + alpha),))


EX4_MATRIX = np.array([[-100.0, 0.0], [-99.0, -1.0]])


def _ex4(alpha):
    A = EX4_MATRIX

    def rhs(t, y):
        return y @ A.T

    def jac(t, y):
        return A

    def exact(t):
        if t == 0:
            return np.array([2.0, 3.0])
        ta = t ** alpha
        e100 = mittag_leffler(alpha, -100.0 * ta)
        e1 = mittag_leffler(alpha, -ta)
        return np.array([2 * e100, 2 * e100 + e1])

    prob = FdeProblem(alpha, np.array([[2.0, 3.0]]), 20.0, rhs, jac, exact, vectorized=True)
    return prob, None


_BUILDERS = {"ex1": _ex1, "ex2": _ex2, "ex3": _ex3, "ex4": _ex4}


def get_problem(id: str, alpha: float | None = None) -> BenchmarkProblem:
    """Fully wired benchmark problem ``id`` in {ex1, ex2, ex3, ex4}."""
    if id not in PROBLEMS:
        raise ValueError(f"unknown problem {id!r}; choose from {', '.join(PROBLEMS)}")
    (lo, hi), default, fixed, _, notes = PROBLEMS[id]
    if alpha is None:
        alpha = default
    alpha = float(alpha)
    if fixed:
        if alpha != default:
            raise ValueError(f"{id} is only defined for alpha = {default}")
    elif not lo < alpha < hi:
        raise ValueError(f"{id} needs alpha in ({lo}, {hi}), got {alpha}")
    prob, terms = _BUILDERS[id](alpha)
    return BenchmarkProblem(id, prob, default, notes, terms)


def mescd(reference, approx) -> float:
    """Mixed-error significant computed digits.

    ``-log10 max_i || (y_i - yhat_i) / (1 + |y_i|) ||_inf``, capped at 17 (also
    returned for exact agreement). NaN anywhere gives NaN.
    """
    ref = np.asarray(reference, dtype=float)
    app = np.asarray(approx, dtype=float)
    if ref.shape != app.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {app.shape}")
    if np.isnan(ref).any() or np.isnan(app).any():
        return math.nan
    err = np.max(np.abs(ref - app) / (1.0 + np.abs(ref)))
    if err == 0.0:
        return MESCD_CAP
    return min(-math.log10(err), MESCD_CAP)


def _caputo_power(c, p, alpha, ell, t):
    # Caputo derivative of c t^p; polynomial terms of degree < ell vanish
    if p == int(p) and p < ell:
        return np.zeros_like(t)
    return c * gamma_ratio(p + 1, p + 1 - alpha) * t ** (p - alpha)


def residual_check(bp: BenchmarkProblem, t_grid) -> float:
    """Max ``|D^alpha y_exact - f(t, y_exact)|`` over ``t_grid`` (t > 0)."""
    if bp.power_terms is None:
        raise ValueError(f"{bp.id} has no power-series exact solution")
    prob = bp.problem
    t = np.asarray(t_grid, dtype=float)
    lhs = np.stack([sum(_caputo_power(c, p, prob.alpha, prob.ell, t) for c, p in comp)
                    for comp in bp.power_terms], axis=1)
    y = np.array([prob.exact(ti) for ti in t])
    return float(np.max(np.abs(lhs - prob.f(t, y))))
