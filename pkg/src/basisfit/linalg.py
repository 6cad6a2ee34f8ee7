"""Dense SPD linear algebra used by the fitting stages.

The systems here are tiny (basis dimension plus one, hence tens of rows),
so an unpivoted Cholesky factorization is both sufficient and gives us a
precise failure signal: the index of the first non-positive pivot.
Triangular solves are delegated to scipy.  Everything runs in float64
regardless of how grids were stored on disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite

# Pivots at or below this are treated as numerically zero.  Kept absurdly
# small on purpose: losing positive definiteness should be reported via
# NotPositiveDefinite, not masked by an early threshold.
PIVOT_FLOOR = 1e-300


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with A = L @ L.T."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def _as_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def cholesky(a: np.ndarray) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix as L @ L.T.

    Only the lower triangle of `a` is read.  Raises NotPositiveDefinite
    with the offending pivot index when a pivot is <= PIVOT_FLOOR.
    """
    a = _as_square(a)
    n = a.shape[0]
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= PIVOT_FLOOR:
            raise NotPositiveDefinite(j, float(pivot))
        ljj = np.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return CholeskyFactor(lower)


def solve_spd(factor: CholeskyFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve (L @ L.T) x = rhs by forward then back substitution."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != factor.dim:
        raise DimensionMismatch(
            f"rhs has {rhs.shape[0]} entries, factor dimension is {factor.dim}"
        )
    y = solve_triangular(factor.lower, rhs, lower=True)
    return solve_triangular(factor.lower, y, lower=True, trans="T")


def solve_spd_backward(
    a: np.ndarray,
    x: np.ndarray,
    grad_x: np.ndarray,
    factor: CholeskyFactor | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode sensitivities of x = a^{-1} rhs.

    Given the upstream gradient with respect to x, returns
    (grad_a, grad_rhs) where grad_rhs = a^{-1} grad_x and
    grad_a = -grad_rhs x^T symmetrized as (G + G^T)/2.  `factor` may be
    passed to reuse an existing factorization of `a`.
    """
    a = _as_square(a)
    x = np.asarray(x, dtype=np.float64)
    grad_x = np.asarray(grad_x, dtype=np.float64)
    if x.shape != grad_x.shape or x.shape[0] != a.shape[0]:
        raise DimensionMismatch(
            f"inconsistent shapes: a {a.shape}, x {x.shape}, grad_x {grad_x.shape}"
        )
    if factor is None:
        factor = cholesky(a)
    grad_rhs = solve_spd(factor, grad_x)
    outer = -np.outer(grad_rhs, x)
    grad_a = 0.5 * (outer + outer.T)
    return grad_a, grad_rhs
