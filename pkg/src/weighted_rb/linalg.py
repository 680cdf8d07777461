"""Linear-algebra kernels: SPD sparse factorizations and dense symmetric eigensolves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SOLVER_RTOL = 1e-12


class SolverError(RuntimeError):
    """A linear solve failed: the matrix is not SPD or the iteration stalled."""


def symmetrize(A):
    """Exactly symmetric copy of ``A`` (pattern and values)."""
    A = sp.csr_matrix(A)
    S = ((A + A.T) * 0.5).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    return S


def is_exactly_symmetric(A) -> bool:
    A = sp.csr_matrix(A)
    return (A != A.T).nnz == 0


class SPDFactor:
    """Reusable direct factorization of a sparse SPD matrix.

    SuperLU is run with the symmetric-mode options (minimum degree on
    ``A + A^T``, diagonal pivoting preferred), which for an SPD matrix gives
    a Cholesky-like factorization without extra dependencies.
    """

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got shape {A.shape}")
        self.shape = A.shape
        self._A = A
        diag = A.diagonal()
        if np.any(diag <= 0.0):
            raise SolverError("matrix has non-positive diagonal entries; not SPD")
        try:
            self._lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        # SPD <=> all pivots positive when no row exchanges happened
        u_diag = self._lu.U.diagonal()
        if np.any(u_diag <= 0.0) or np.any(self._lu.perm_r != self._lu.perm_c):
            raise SolverError("factorization produced non-positive pivots; not SPD")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 2 and rhs.shape[1] == 0:
            return np.zeros_like(rhs)
        return self._lu.solve(rhs)

    __call__ = solve


def sparse_solve(A, rhs: np.ndarray, rtol: float = SOLVER_RTOL, method: str = "direct") -> np.ndarray:
    """Solve ``A x = rhs`` for a symmetric positive definite sparse ``A``.

    ``method="direct"`` uses :class:`SPDFactor`; ``method="cg"`` runs
    conjugate gradients to relative residual ``rtol``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    if method == "direct":
        return SPDFactor(A).solve(rhs)
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    A = sp.csr_matrix(A)
    x, info = spla.cg(A, rhs, rtol=rtol, atol=0.0, maxiter=10 * A.shape[0])
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    return x


@dataclass(frozen=True)
class DenseSpectrum:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns


def sym_eig(A: np.ndarray, tol: float = 1e-12) -> DenseSpectrum:
    """Full spectrum of a dense symmetric matrix, eigenvalues descending."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if np.abs(A - A.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    w, V = la.eigh(0.5 * (A + A.T))
    return DenseSpectrum(w[::-1].copy(), V[:, ::-1].copy())
