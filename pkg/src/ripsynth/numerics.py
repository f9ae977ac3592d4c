"""Dense real-matrix kernel: eigenvalues, linear solves, Cholesky, expm.

All operations validate their inputs (shape and finiteness) and raise the
toolkit's typed errors instead of leaking backend exceptions.  The heavy
lifting is delegated to LAPACK through numpy/scipy: eigenvalues via the
Hessenberg + shifted-QR path, linear solves and determinants via LU with
partial pivoting, and the matrix exponential via Pade scaling-and-squaring.
Matrices in this toolkit are tiny (n <= ~20), so robustness is the only
concern.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    DimensionError,
    NotPositiveDefiniteError,
    SingularMatrixError,
)

# Pivot |u_ii| <= SINGULARITY_RTOL * max|entry| is treated as singular.
SINGULARITY_RTOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name} must be 2-D with positive extents, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_square_matrix(a, name: str = "matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def is_symmetric(m: np.ndarray, rtol: float = 1e-10) -> bool:
    scale = np.max(np.abs(m))
    return bool(np.max(np.abs(m - m.T)) <= rtol * max(scale, 1e-300))


def eigenvalues(m) -> np.ndarray:
    """All eigenvalues of a square matrix, with multiplicity, order unspecified."""
    a = as_square_matrix(m)
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # QR iteration failure
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc


def _lu(m: np.ndarray):
    """LU with partial pivoting plus the shared singularity test."""
    lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    pivots = np.abs(np.diag(lu))
    tol = SINGULARITY_RTOL * np.max(np.abs(m))
    if np.min(pivots) <= tol:
        raise SingularMatrixError(
            f"matrix is singular to working tolerance (pivot {np.min(pivots):.3e} <= {tol:.3e})"
        )
    return lu, piv


def solve_linear(m, rhs) -> np.ndarray:
    """Solve m @ X = rhs for square nonsingular m."""
    a = as_square_matrix(m, "m")
    b = as_matrix(rhs, "rhs")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, expected {a.shape[0]}")
    lu, piv = _lu(a)
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def determinant(m) -> float:
    """Determinant via the same LU factorization used by solve_linear."""
    a = as_square_matrix(m)
    try:
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - lu_factor rarely raises
        raise SingularMatrixError(str(exc)) from exc
    # Row swap count gives the permutation sign.
    sign = 1.0 if np.sum(piv != np.arange(len(piv))) % 2 == 0 else -1.0
    return float(sign * np.prod(np.diag(lu)))


def cholesky(s) -> np.ndarray:
    """Lower-triangular L with L @ L.T = s for symmetric positive definite s."""
    a = as_square_matrix(s, "s")
    if not is_symmetric(a):
        raise DimensionError("matrix is not symmetric to 1e-10 relative tolerance")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc


def matrix_exponential(m) -> np.ndarray:
    """e^m by Pade approximation with scaling and squaring."""
    a = as_square_matrix(m)
    return scipy.linalg.expm(a)
