"""Dense real matrix helpers and the regularized least-squares solver.

Matrices are plain 2-D ``float64`` numpy arrays (row-major). Every learned
weight in the package comes out of :func:`ridge_solve`.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

# floor used in place of the lambda -> 0 limit
PINV_LAMBDA_MIN = 1e-8

# Cholesky pivot ratio below which an unregularized system counts as singular
_SINGULAR_RCOND = 1e-12


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class SolverError(ArithmeticError):
    """The normal equations could not be solved."""


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array (1-D input becomes a row)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size == 0:
        raise DimensionError(f"{name} is empty (shape {m.shape})")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def ridge_solve(u, y, lam: float) -> np.ndarray:
    """Return ``W = (U^T U + lam I)^-1 U^T Y``.

    This minimizes ``||U W - Y||^2 + lam ||W||^2``. The F x F normal equations
    are factored by Cholesky; when that fails the system is retried with a
    pivoted LU solve, and at ``lam == 0`` a (numerically) singular Gram matrix
    raises :class:`SolverError`.
    """
    u = as_matrix(u, "u")
    y = as_matrix(y, "y")
    if u.shape[0] != y.shape[0]:
        raise DimensionError(f"u is {u.shape[0]}x{u.shape[1]} but y is {y.shape[0]}x{y.shape[1]}; row counts differ")
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lambda must be a finite non-negative number, got {lam}")

    gram = u.T @ u
    if lam:
        gram[np.diag_indices_from(gram)] += lam
    rhs = u.T @ y

    try:
        factor = sla.cho_factor(gram, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        factor = None
    if factor is not None:
        d = np.abs(np.diag(factor[0]))
        if lam == 0 and d.min() <= _SINGULAR_RCOND * d.max():
            raise SolverError("U^T U is singular at lambda=0; use a positive lambda")
        w = sla.cho_solve(factor, rhs, check_finite=False)
    else:
        try:
            w = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"normal equations are singular ({exc}); raise lambda") from exc
        if lam == 0 and np.linalg.cond(gram) > 1.0 / _SINGULAR_RCOND**2:
            raise SolverError("U^T U is singular at lambda=0; use a positive lambda")
    if not np.all(np.isfinite(w)):
        raise SolverError("solution is not finite; raise lambda")
    return w


def pseudo_inverse(u, refine: int = 3) -> np.ndarray:
    """Moore-Penrose pseudo-inverse as ridge with a tiny lambda, then refined.

    Each refinement step (iterated Tikhonov) solves the same regularized
    system for the residual ``I - U X`` and shrinks the gap to the exact
    pseudo-inverse by ``lam / (s^2 + lam)`` per singular value ``s``, so
    ill-conditioned but full-rank inputs still reach ``U+ U = I`` while
    null-space directions stay at zero.
    """
    u = as_matrix(u, "u")
    eye = np.eye(u.shape[0])
    x = ridge_solve(u, eye, PINV_LAMBDA_MIN)
    for _ in range(refine):
        x = x + ridge_solve(u, eye - u @ x, PINV_LAMBDA_MIN)
    return x
