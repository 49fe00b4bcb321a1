"""Dense small-matrix kernel.

SVD-based pseudoinverse, weighted pseudoinverse, numerical rank and the
oriented unit tangent of an ``m x (m+1)`` matrix. Everything here is sized
for matrices up to roughly 16 x 17, so no attempt is made at blocking or
sparsity.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, RankDeficientError

DEFAULT_TOL = 1e-10


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix has non-finite entries")
    return A


def _cutoff(s: np.ndarray, tol: float) -> float:
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    return tol * (s[0] if s.size else 0.0)


def pinv(A, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse.

    Singular values at or below ``tol * sigma_max`` are treated as zero.
    """
    A = _as_matrix(A)
    if A.shape[0] == 1:
        # single row: the only singular value is the row norm
        if tol <= 0:
            raise InvalidInputError("tol must be positive")
        nrm2 = float(A[0] @ A[0])
        if nrm2 == 0.0:
            return np.zeros((A.shape[1], 1))
        return A.T / nrm2
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cut = _cutoff(s, tol)
    s_inv = np.zeros_like(s)
    keep = s > cut
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def weighted_pinv(A, Q, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Return ``Q (A Q)^+`` for a positive diagonal weight ``Q``.

    ``Q`` may be given as a square diagonal matrix or as its diagonal.
    """
    A = _as_matrix(A)
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        q = Q
    elif Q.ndim == 2 and Q.shape[0] == Q.shape[1]:
        q = np.diag(Q)
        if not np.allclose(Q, np.diag(q), rtol=0.0, atol=0.0):
            raise InvalidInputError("weight matrix must be diagonal")
    else:
        raise InvalidInputError(f"weight must be square diagonal, got shape {Q.shape}")
    if q.size != A.shape[1]:
        raise InvalidInputError(
            f"weight dimension {q.size} does not match {A.shape[1]} matrix columns"
        )
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise InvalidInputError("weight diagonal must be finite and positive")
    return q[:, None] * pinv(A * q[None, :], tol)


def rank(A, tol: float = DEFAULT_TOL) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    A = _as_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > _cutoff(s, tol)))


def det(A) -> float:
    """Determinant via LU with partial pivoting (LAPACK getrf)."""
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError("determinant needs a square matrix")
    return float(np.linalg.det(A))


def tangent_vector(A, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Oriented unit null vector of a full-row-rank ``m x (m+1)`` matrix.

    The result satisfies ``A @ tau == 0``, ``||tau|| == 1`` and
    ``det([A; tau]) > 0``.

    Raises
    ------
    RankDeficientError
        If ``rank(A) < m``; the null space is then at least two-dimensional
        and the direction is not unique.
    """
    A = _as_matrix(A)
    m, n = A.shape
    if n != m + 1:
        raise InvalidInputError(f"tangent needs an m x (m+1) matrix, got {A.shape}")
    if m == 1:
        a, b = A[0]
        nrm = float(np.hypot(a, b))
        if nrm == 0.0:
            raise RankDeficientError("continuation matrix is zero", state=A.copy())
        # det([[a, b], [-b, a]]) = a^2 + b^2 > 0
        return np.array([-b, a]) / nrm
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s[0] == 0.0 or s[-1] <= _cutoff(s, tol):
        smin = s[-1] if s.size else 0.0
        raise RankDeficientError(
            f"continuation matrix is rank deficient (sigma_min={smin:.3e}, sigma_max={s[0]:.3e})",
            state=A.copy(),
        )
    tau = Vt[-1].copy()
    if np.linalg.det(np.vstack([A, tau])) < 0:
        tau = -tau
    return tau


def sigma_min(A) -> float:
    """Smallest of the ``min(A.shape)`` singular values."""
    A = _as_matrix(A)
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def scalar_pinv(a: float, tol: float = 1e-12) -> float:
    """Scalar pseudoinverse: ``1/a`` when ``|a| > tol``, otherwise 0."""
    a = float(a)
    if not np.isfinite(a):
        raise InvalidInputError("scalar must be finite")
    return 1.0 / a if abs(a) > tol else 0.0
