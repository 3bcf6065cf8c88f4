"""Graded and uniform partitions of [0, T]."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = ["Mesh", "build_uniform", "build_graded", "build_graded_first_step", "DEFAULT_THETA"]

DEFAULT_THETA = 0.5


@dataclass(frozen=True)
class Mesh:
    kind: str
    T: float
    N: int
    r: float | None
    h1: float
    nodes: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)

    @property
    def steps(self) -> np.ndarray:
        """Nominal step sizes ``h_n``, ``n = 1..N``.

        Graded steps are ``r^(n-1) h_1`` even where the pinned last node
        absorbs a rounding-level difference.
        """
        if self.kind == "graded":
            return self.h1 * self.r ** np.arange(self.N)
        return np.full(self.N, self.h1)


def build_uniform(T: float, M: int) -> Mesh:
    """``M`` equal steps of size ``T / M``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M!r}")
    nodes = np.arange(M + 1) * (T / M)
    nodes[-1] = T
    return Mesh("uniform", float(T), int(M), None, T / M, nodes)


def build_graded_first_step(T: float, M: int, h1: float) -> Mesh:
    """Geometric mesh from a target first step ``h1`` and last step ``T / M``.

    ``N`` is the smallest count with ``h1 r^(N-1) >= T/M`` at the limiting
    ratio ``M / (M - 1)``; ``r`` then solves ``r^(N-1) (M - (M-1) r) = 1``, so
    that the steps sum to ``T`` and the last one equals ``T / M``. For very
    small ``h1`` the root sits within rounding of ``M / (M - 1)``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    if M < 2:
        raise ValueError(f"graded meshes need M >= 2, got {M!r}")
    if not 0 < h1 < T / M:
        raise ValueError(f"first step {h1!r} must lie in (0, T/M)")
    bound = M / (M - 1)
    N = max(M + 1, math.ceil(1 + math.log(T / (M * h1)) / math.log(bound) - 1e-12))

    def g(r):
        return (N - 1) * math.log(r) + math.log(M - (M - 1) * r)

    # g > 0 just above 1 (N > M) and g -> -inf at the bound
    lo = 1.0 + 1e-9 * (bound - 1.0)
    hi = bound * (1 - 4 * np.finfo(float).eps)
    r = hi if g(hi) >= 0 else brentq(g, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
    h1 = T * (r - 1.0) / math.expm1(N * math.log(r))
    return _graded(T, N, r, h1)


def _graded(T, N, r, h1):
    steps = h1 * r ** np.arange(N)
    nodes = np.concatenate(([0.0], np.cumsum(steps)))
    nodes[-1] = T
    return Mesh("graded", float(T), int(N), float(r), float(h1), nodes)


def build_graded(T: float, M: int, r_override: float | None = None) -> Mesh:
    """Geometric mesh ``h_n = r^(n-1) h_1`` whose largest step is at most ``T/M``.

    Without ``r_override`` the ratio is ``(M / (M - 1))**0.5``. ``N`` is the
    smallest count with ``sum_{i<N} r^-i >= M``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    if M < 2:
        raise ValueError(f"graded meshes need M >= 2, got {M!r}")
    bound = M / (M - 1)
    if r_override is None:
        r = bound ** DEFAULT_THETA
    else:
        r = float(r_override)
        if not 1.0 < r < bound:
            raise ValueError(
                f"r={r!r} is infeasible for M={M}: need 1 < r < M/(M-1) = {bound!r}, "
                "otherwise the largest step cannot come down to T/M")
    arg = 1.0 - M * (r - 1.0) / r
    N = math.ceil(-math.log(arg) / math.log(r) - 1e-12)
    # guard against the ceiling landing one short after rounding
    while np.sum(r ** -np.arange(N, dtype=float)) < M * (1 - 1e-14):
        N += 1
    h1 = T * (r - 1.0) / math.expm1(N * math.log(r))
    return _graded(T, N, r, h1)
