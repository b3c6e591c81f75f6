"""Dense small-matrix kernels.

Symmetric eigendecomposition is done with cyclic Jacobi rotations: the
matrices in this package never exceed order ~12, so the simple method is
accurate and fast enough. Matrices are plain ``numpy.ndarray`` objects.
"""

from __future__ import annotations

import numpy as np

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
PIVOT_TOL = 1e-13
SINGULAR_COND = 1e12


class NumericFailure(ArithmeticError):
    """An iterative kernel did not converge."""


class NotPositiveDefinite(ValueError):
    """Raised when a matrix expected to be positive definite is not."""


class SingularMatrix(ValueError):
    pass


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _check_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    return m


def sym_eigs(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Returns ``(w, V)`` with ``m ~= V @ diag(w) @ V.T``. Only the symmetric part
    of ``m`` is used.
    """
    a = symmetrize(_check_square(m)).copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-30 * scale:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NumericFailure(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def lambda_max(m: np.ndarray) -> float:
    return float(sym_eigs(m)[0][-1])


def lambda_min(m: np.ndarray) -> float:
    return float(sym_eigs(m)[0][0])


def is_negative_definite(m: np.ndarray, margin: float = 0.0) -> bool:
    """True iff the largest eigenvalue of ``m`` is below ``-margin``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return lambda_max(m) < -margin


def is_positive_definite(m: np.ndarray, margin: float = 0.0) -> bool:
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return lambda_min(m) > margin


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises NotPositiveDefinite when a pivot falls to ``1e-13 * ||m||_F`` or below.
    """
    a = symmetrize(_check_square(m))
    n = a.shape[0]
    tol = PIVOT_TOL * np.linalg.norm(a)
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > tol:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e}")
        low[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            low[i, j] = (a[i, j] - low[i, :j] @ low[j, :j]) / low[j, j]
    return low


def inverse(m: np.ndarray) -> np.ndarray:
    m = _check_square(m)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularMatrix(f"condition number {cond:.3e} exceeds {SINGULAR_COND:.0e}")
    return np.linalg.inv(m)


def gen_eig_max(a: np.ndarray, b: np.ndarray) -> float:
    """Least ``s`` such that ``a <= s * b`` in the Loewner order (``b`` PD)."""
    a = symmetrize(_check_square(a))
    b = _check_square(b)
    if a.shape != b.shape:
        raise ValueError("a and b must have the same order")
    try:
        low = cholesky(b)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"comparison matrix is not positive definite: {exc}") from exc
    linv = np.linalg.solve(low, np.eye(low.shape[0]))
    return lambda_max(linv @ a @ linv.T)
