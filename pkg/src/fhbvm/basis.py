"""Orthonormal Jacobi polynomials on [0, 1] and the associated Gauss rules.

The weight is ``w(c) = alpha * (1 - c)**(alpha - 1)``, which has unit mass on
[0, 1], so the degree-zero orthonormal polynomial is identically one. On
[-1, 1] this is the Jacobi weight with exponents ``(alpha - 1, 0)``; the
recurrence coefficients below are the classical closed forms mapped onto
[0, 1] through ``x = 2c - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "JacobiRule",
    "jacobi_recurrence",
    "eval_poly_sequence",
    "gauss_jacobi_rule",
    "gauss_legendre_rule",
]


@dataclass(frozen=True)
class JacobiRule:
    """Orthonormal basis data and the k-point Gauss-Jacobi rule for one alpha.

    Attributes
    ----------
    alpha : float
        Weight exponent parameter (the fractional order).
    k : int
        Number of quadrature nodes.
    rec_a, rec_b : ndarray
        Recurrence coefficients of length ``k + 1``. ``rec_b[0]`` is the mass
        of the weight (1); ``sqrt(rec_b[n])`` couples ``P_n`` and ``P_{n-1}``.
    nodes : ndarray
        The ``k`` zeros of ``P_k``, increasing, in (0, 1).
    weights : ndarray
        Positive quadrature weights summing to one.
    """

    alpha: float
    k: int
    rec_a: np.ndarray
    rec_b: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("rec_a", "rec_b", "nodes", "weights"):
            getattr(self, name).setflags(write=False)

    def eval(self, c, s: int) -> np.ndarray:
        """Values ``P_0 .. P_{s-1}`` at ``c``; shape ``c.shape + (s,)``."""
        return _eval_recurrence(self.rec_a, self.rec_b, c, s)


def jacobi_recurrence(alpha: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Recurrence coefficients for the orthonormal family under ``w`` on [0, 1].

    Returns ``(a, b)`` of length ``n_max + 1`` such that, with ``P_{-1} = 0``
    and ``P_0 = 1``,

        sqrt(b[n+1]) P_{n+1}(c) = (c - a[n]) P_n(c) - sqrt(b[n]) P_{n-1}(c).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max!r}")
    ja = alpha - 1.0  # Jacobi exponent at x = 1; the exponent at x = -1 is 0
    n = np.arange(n_max + 1, dtype=float)
    ab = ja  # a + b with b = 0

    # monic Jacobi coefficients on [-1, 1]
    a = np.empty(n_max + 1)
    a[0] = -ja / (ab + 2.0)
    nn = n[1:]
    a[1:] = -(ja * ja) / ((2 * nn + ab) * (2 * nn + ab + 2))

    b = np.empty(n_max + 1)
    b[0] = 1.0  # unit mass after mapping to [0, 1]
    b[1] = 4.0 * (ja + 1.0) / ((ab + 2.0) ** 2 * (ab + 3.0))
    if n_max >= 2:
        nn = n[2:]
        b[2:] = (4.0 * nn * (nn + ja) * nn * (nn + ab)
                 / ((2 * nn + ab) ** 2 * (2 * nn + ab + 1) * (2 * nn + ab - 1)))

    # x = 2c - 1: monic in c picks up a factor 1/2 per degree
    rec_a = (a + 1.0) / 2.0
    rec_b = b.copy()
    rec_b[1:] /= 4.0
    return rec_a, rec_b


def _eval_recurrence(rec_a, rec_b, c, s):
    c = np.asarray(c, dtype=float)
    out = np.empty(c.shape + (s,))
    if s == 0:
        return out
    out[..., 0] = 1.0
    if s == 1:
        return out
    sq = np.sqrt(rec_b)
    out[..., 1] = (c - rec_a[0]) / sq[1]
    for n in range(1, s - 1):
        out[..., n + 1] = ((c - rec_a[n]) * out[..., n] - sq[n] * out[..., n - 1]) / sq[n + 1]
    return out


def eval_poly_sequence(rule: JacobiRule, c, s: int) -> np.ndarray:
    """Evaluate ``[P_0(c), ..., P_{s-1}(c)]`` by forward recurrence.

    ``c`` may lie anywhere on the real line and may be an array.
    """
    if s < 0 or s > len(rule.rec_a):
        raise ValueError(f"s={s} exceeds the available recurrence length {len(rule.rec_a)}")
    return rule.eval(c, s)


def _christoffel_weights(rec_a, rec_b, nodes, k):
    vals = _eval_recurrence(rec_a, rec_b, nodes, k)
    return 1.0 / np.sum(vals * vals, axis=1)


def _polish(rec_a, rec_b, x, k, sweeps=2):
    # Newton on P_k, carrying the derivative through the recurrence
    sq = np.sqrt(rec_b)
    for _ in range(sweeps):
        p_prev = np.zeros_like(x)
        p = np.ones_like(x)
        dp_prev = np.zeros_like(x)
        dp = np.zeros_like(x)
        for n in range(k):
            p_next = ((x - rec_a[n]) * p - sq[n] * p_prev) / sq[n + 1]
            dp_next = (p + (x - rec_a[n]) * dp - sq[n] * dp_prev) / sq[n + 1]
            p_prev, p = p, p_next
            dp_prev, dp = dp, dp_next
        x = x - p / dp
    return x


def _gauss_from_recurrence(rec_a, rec_b, k):
    d = rec_a[:k]
    e = np.sqrt(rec_b[1:k])
    try:
        x = eigh_tridiagonal(d, e, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"tridiagonal eigenvalue iteration failed for k={k}") from exc
    x = np.sort(x)
    x = _polish(rec_a, rec_b, x, k)
    if not (np.all(np.isfinite(x)) and np.all(np.diff(x) > 0)):
        raise RuntimeError(f"Gauss rule construction failed for k={k}")
    w = _christoffel_weights(rec_a, rec_b, x, k)
    # the weight function has unit mass
    return x, w / math.fsum(w)


@lru_cache(maxsize=64)
def gauss_jacobi_rule(alpha: float, k: int) -> JacobiRule:
    """k-point Gauss rule for ``w(c) = alpha (1 - c)**(alpha - 1)`` on [0, 1].

    Nodes come from the symmetric tridiagonal (Jacobi) matrix, refined by
    Newton steps on ``P_k``; weights are Christoffel numbers
    ``1 / sum_j P_j(c_i)**2``. The result is cached per ``(alpha, k)``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k!r}")
    alpha = float(alpha)
    rec_a, rec_b = jacobi_recurrence(alpha, k)
    nodes, weights = _gauss_from_recurrence(rec_a, rec_b, k)
    if nodes[0] <= 0.0 or nodes[-1] >= 1.0:
        raise RuntimeError("Gauss-Jacobi nodes escaped (0, 1)")
    return JacobiRule(alpha, k, rec_a, rec_b, nodes, weights)


@lru_cache(maxsize=64)
def gauss_legendre_rule(k: int) -> tuple[np.ndarray, np.ndarray]:
    """k-point Gauss-Legendre nodes and weights on [0, 1]."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k!r}")
    rec_a, rec_b = jacobi_recurrence(1.0, k)
    x, w = _gauss_from_recurrence(rec_a, rec_b, k)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w
