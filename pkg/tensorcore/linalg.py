"""
Dense Jacobi kernels: one-sided SVD and symmetric eigendecomposition.

Neither routine records on the tape.
"""

from typing import Tuple

import numpy as np

EPS = np.finfo(np.float64).eps
MAX_SWEEPS = 80
SYMMETRY_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """A Jacobi iteration ran out of sweeps."""

    def __init__(self, routine: str, residual: float, sweeps: int):
        self.routine = routine
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(f"{routine}: no convergence after {sweeps} sweeps "
                         f"(off-diagonal residual {residual:.3e})")


def _complete_columns(U: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Replace the `missing` columns of U with an orthonormal completion."""
    m = U.shape[0]
    known = U[:, ~missing]
    Q, _ = np.linalg.qr(np.hstack([known, np.eye(m)]))
    extra = Q[:, known.shape[1]:known.shape[1] + int(missing.sum())]
    U = U.copy()
    U[:, missing] = extra
    return U


def svd(A, max_sweeps: int = MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Args:
        A: m x n matrix

    Returns:
        (U, s, V) with A = U diag(s) V^T, s descending, U: m x k, V: n x k, k = min(m, n)
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"svd: expected a matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError("svd: matrix has non-finite entries")
    m, n = A.shape
    if m < n:
        U, s, V = svd(A.T, max_sweeps)
        return V, s, U

    W = A.copy()
    V = np.eye(n)
    tol = max(1e-14, EPS * m)
    residual = 0.0
    for sweep in range(max_sweeps):
        residual = 0.0
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = W[:, p], W[:, q]
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                scale = np.sqrt(alpha * beta)
                if scale == 0.0 or gamma == 0.0:
                    continue
                residual = max(residual, abs(gamma) / scale)
                if abs(gamma) <= tol * scale:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s_ = c * t
                col_p = W[:, p].copy()
                W[:, p] = c * col_p - s_ * W[:, q]
                W[:, q] = s_ * col_p + c * W[:, q]
                col_p = V[:, p].copy()
                V[:, p] = c * col_p - s_ * V[:, q]
                V[:, q] = s_ * col_p + c * V[:, q]
        if not rotated:
            break
    else:
        raise ConvergenceError("svd", residual, max_sweeps)

    sigma = np.sqrt((W * W).sum(axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]

    cutoff = sigma[0] * EPS if sigma.size and sigma[0] > 0 else 0.0
    missing = sigma <= cutoff
    U = np.zeros_like(W)
    U[:, ~missing] = W[:, ~missing] / sigma[~missing]
    if missing.any():
        U = _complete_columns(U, missing)
    return U, sigma, V


def eig_sym(S, max_sweeps: int = MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns:
        (eigenvalues ascending, eigenvectors as columns)
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"eig_sym: expected a square matrix, got shape {S.shape}")
    asym = float(np.abs(S - S.T).max()) if S.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, float(np.abs(S).max())):
        raise ValueError(f"eig_sym: matrix is not symmetric (max |S - S^T| = {asym:.3e})")

    n = S.shape[0]
    A = 0.5 * (S + S.T)
    Q = np.eye(n)
    target = max(1e-14, EPS * n) * np.linalg.norm(A)

    def off_norm(M):
        # summed directly; total minus diagonal cancels to rounding noise
        off = M - np.diag(np.diag(M))
        return float(np.sqrt((off * off).sum()))

    for sweep in range(max_sweeps):
        if off_norm(A) <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                A[:, p] = c * col_p - s * A[:, q]
                A[:, q] = s * col_p + c * A[:, q]
                row_p = A[p, :].copy()
                A[p, :] = c * row_p - s * A[q, :]
                A[q, :] = s * row_p + c * A[q, :]
                A[p, q] = A[q, p] = 0.0
                col_p = Q[:, p].copy()
                Q[:, p] = c * col_p - s * Q[:, q]
                Q[:, q] = s * col_p + c * Q[:, q]
    else:
        residual = off_norm(A)
        if residual > target:
            raise ConvergenceError("eig_sym", residual, max_sweeps)

    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    return values[order], Q[:, order]
