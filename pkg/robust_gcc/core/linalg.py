"""
Dense real matrix kernel.

Plain matrices are float64 ``np.ndarray`` objects of shape (rows, cols);
symmetric matrices are square arrays symmetrized on entry. Factorizations go
through LAPACK (numpy/scipy), which is deterministic for a given build.
"""

from typing import Sequence, Tuple
import logging

import numpy as np
import scipy.linalg

from ..exceptions import (
    ConvergenceError,
    DimensionError,
    NotPositiveSemidefiniteError,
)

logger = logging.getLogger(__name__)

# Absolute part of the PSD/factorization tolerance; the relative part is
# REL_TOL * ||x||_2.
PSD_ABS_TOL = 1e-9
PSD_REL_TOL = 1e-12
PINV_RTOL = 1e-12


def as_matrix(x, name: str = "matrix", allow_empty: bool = False) -> np.ndarray:
    """Convert to a finite 2-D float array, rejecting empty matrices."""
    arr = np.array(x, dtype=float, ndmin=2)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and (arr.shape[0] < 1 or arr.shape[1] < 1):
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    return arr


def as_symmetric(x, name: str = "matrix", tol: float = 1e-8) -> np.ndarray:
    """Convert to a symmetric matrix; asymmetry above tol is an error."""
    arr = as_matrix(x, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    scale = 1.0 + np.max(np.abs(arr))
    if np.max(np.abs(arr - arr.T)) > tol * scale:
        raise DimensionError(f"{name} is not symmetric")
    return symmetrize(arr)


def symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def psd_tolerance(x: np.ndarray) -> float:
    """Default PSD tolerance: 1e-9 absolute plus 1e-12 relative to ||x||."""
    if x.size == 0:
        return PSD_ABS_TOL
    return PSD_ABS_TOL + PSD_REL_TOL * float(np.linalg.norm(x, 2))


def kron(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is x[i, j] * y."""
    return np.kron(x, y)


def block_diag(*blocks: np.ndarray) -> np.ndarray:
    """Block-diagonal assembly; zero-sized blocks are allowed."""
    if not blocks:
        return np.zeros((0, 0))
    return scipy.linalg.block_diag(*blocks)


def kron_block_diag(blocks: Sequence[np.ndarray], sizes: Sequence[int]) -> np.ndarray:
    """diag(X_1 (x) I_{s_1}, ..., X_n (x) I_{s_n})."""
    if len(blocks) != len(sizes):
        raise DimensionError(
            f"{len(blocks)} blocks but {len(sizes)} identity sizes"
        )
    return block_diag(*[kron(b, np.eye(s)) for b, s in zip(blocks, sizes)])


def spectral_norm(x: np.ndarray) -> float:
    """Largest singular value."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.linalg.norm(x, 2))


def eig_sym(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    try:
        return np.linalg.eigh(symmetrize(np.asarray(x, dtype=float)))
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"Symmetric eigensolver did not converge: {e}") from e


def min_eig(x: np.ndarray) -> float:
    if np.asarray(x).size == 0:
        return float("inf")
    return float(eig_sym(x)[0][0])


def max_eig(x: np.ndarray) -> float:
    if np.asarray(x).size == 0:
        return float("-inf")
    return float(eig_sym(x)[0][-1])


def is_psd(x: np.ndarray, tol: float = None) -> bool:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return True
    tol = psd_tolerance(x) if tol is None else tol
    return min_eig(x) >= -tol


def psd_factor(x: np.ndarray, tol: float = None) -> np.ndarray:
    """
    Square factor F with F^T F == x.

    Eigenvalues in [-tol, 0) are clipped to zero; anything more negative is
    rejected.
    """
    x = symmetrize(np.asarray(x, dtype=float))
    tol = psd_tolerance(x) if tol is None else tol
    eigvals, eigvecs = eig_sym(x)
    if eigvals[0] < -tol:
        raise NotPositiveSemidefiniteError(
            f"Matrix is not PSD: min eigenvalue {eigvals[0]:.3e} < -{tol:.1e}",
            min_eigenvalue=float(eigvals[0])
        )
    root = np.sqrt(np.clip(eigvals, 0.0, None))
    return root[:, None] * eigvecs.T


def pinv(x: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below rtol*sigma_max count as zero."""
    return np.linalg.pinv(np.asarray(x, dtype=float), rcond=rtol)


def condition_number(x: np.ndarray) -> float:
    s = np.linalg.svd(np.asarray(x, dtype=float), compute_uv=False)
    if s.size == 0:
        return 1.0
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def spectral_radius(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(x))))


def svec_indices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    # Column-major lower triangle: (j, i) pairs of the row-major upper triangle.
    cols, rows = np.triu_indices(n)
    return rows, cols


def svec_length(n: int) -> int:
    return n * (n + 1) // 2


def svec(x: np.ndarray) -> np.ndarray:
    """
    Flatten a symmetric matrix, column-major lower triangle, with off-diagonal
    entries scaled by sqrt(2) so that svec(a) . svec(b) == trace(a b).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rows, cols = svec_indices(n)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return x[rows, cols] * scale


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of svec."""
    v = np.asarray(v, dtype=float).ravel()
    n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if svec_length(n) != v.size:
        raise DimensionError(f"Length {v.size} is not a triangular number")
    rows, cols = svec_indices(n)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    out = np.zeros((n, n))
    out[rows, cols] = v / scale
    out[cols, rows] = v / scale
    return out
