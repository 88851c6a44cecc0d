"""
Dense symmetric positive-semidefinite linear algebra.

Everything here works on small dense symmetric matrices. Eigenpairs come from
a cyclic Jacobi iteration, which is slow for large matrices but exact on
structural zeros: a coordinate that is decoupled from the rest of the matrix
is never rotated, so its eigenvalue stays exactly zero. The observer relies
on that to detect rank deficiency without roundoff noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPsd, NotSymmetric

DEFAULT_TOL_FACTOR = 1e-10
SYMMETRY_TOL = 1e-10
JACOBI_OFF_TOL = 1e-14
JACOBI_MAX_SWEEPS = 30


def sym_psd(M, tol_rel: float = 0.0) -> np.ndarray:
    """Validate ``M`` as symmetric PSD and return its symmetrized copy.

    Raises NotSymmetric / NotPsd. Small negative eigenvalues within the rank
    tolerance are accepted.
    """
    A = _symmetrized(M)
    pinv_psd(A, tol_rel)
    return A


def _symmetrized(M) -> np.ndarray:
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if A.size:
        scale = max(1.0, float(np.max(np.abs(A))))
        asym = float(np.max(np.abs(A - A.T)))
        if asym > SYMMETRY_TOL * scale:
            raise NotSymmetric(f"matrix asymmetry {asym:.3g} exceeds tolerance")
    return 0.5 * (A + A.T)


def jacobi_eigh(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted by descending eigenvalue;
    column ``i`` of ``eigenvectors`` belongs to ``eigenvalues[i]``.
    """
    a = _symmetrized(M)
    n = a.shape[0]
    v = np.eye(n)
    fro = float(np.linalg.norm(a))
    if fro == 0.0 or n < 2:
        w = np.diag(a).copy()
        order = np.argsort(-w, kind="stable")
        return w[order], v[:, order]

    for _ in range(JACOBI_MAX_SWEEPS):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off < JACOBI_OFF_TOL * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = a[p, p] - t * apq
                aqq = a[q, q] + t * apq

                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, p] = app
                a[q, q] = aqq
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class PinvResult:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    ``eigenvalues`` are descending and clamped at zero; ``eigenvectors`` holds
    the matching orthonormal columns.
    """

    pinv: np.ndarray
    rank: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    tol_used: float

    @property
    def dim(self) -> int:
        return self.pinv.shape[0]

    @property
    def range_basis(self) -> np.ndarray:
        return self.eigenvectors[:, : self.rank]

    def project(self, v) -> np.ndarray:
        """Orthogonal projection of ``v`` onto the range of the source matrix."""
        U = self.range_basis
        return U @ (U.T @ np.asarray(v, dtype=float))


def default_tol(dim: int) -> float:
    return DEFAULT_TOL_FACTOR * max(dim, 1)


def pinv_psd(M, tol_rel: float = 0.0) -> PinvResult:
    """Pseudoinverse of a symmetric PSD matrix via its eigendecomposition.

    Parameters
    ----------
    M : array_like, shape (n, n)
        Symmetric positive-semidefinite matrix.
    tol_rel : float
        Relative rank threshold. Eigenvalues at or below
        ``tol_rel * max(lambda_max, 1)`` are treated as zero. ``0`` selects
        the default ``1e-10 * n``.

    Returns
    -------
    PinvResult
    """
    if tol_rel < 0:
        raise ValueError("tol_rel must be nonnegative")
    A = _symmetrized(M)
    n = A.shape[0]
    tol_rel = tol_rel or default_tol(n)
    w, V = jacobi_eigh(A)
    lam_max = float(w[0]) if n else 0.0
    tol_used = tol_rel * max(lam_max, 1.0)
    if n and w[-1] < -tol_used:
        raise NotPsd(f"smallest eigenvalue {w[-1]:.6g} is below -{tol_used:.3g}")
    w = np.where(w < 0.0, 0.0, w)
    keep = w > tol_used
    rank = int(np.count_nonzero(keep))
    U = V[:, :rank]
    P = (U / w[:rank]) @ U.T
    P = 0.5 * (P + P.T)
    return PinvResult(pinv=P, rank=rank, eigenvalues=w, eigenvectors=V,
                      tol_used=tol_used)


def min_eigenvalue(M) -> float:
    """Smallest eigenvalue of a symmetric matrix, clamped at zero."""
    w, _ = jacobi_eigh(M)
    if w.size == 0:
        return 0.0
    return max(float(w[-1]), 0.0)


def project_range(M, v, tol_rel: float = 0.0) -> np.ndarray:
    """Return ``M^+ M v``, the projection of ``v`` onto range(M)."""
    v = np.asarray(v, dtype=float)
    A = np.asarray(M, dtype=float)
    if v.shape != (A.shape[0],):
        raise DimensionMismatch(
            f"vector of shape {v.shape} does not match matrix of shape {A.shape}")
    return pinv_psd(A, tol_rel).project(v)


def pinv_rect(A, tol_rel: float = 0.0) -> np.ndarray:
    """General Moore-Penrose pseudoinverse of a rectangular matrix.

    Computed as ``(A'A)^+ A'``. Squaring the matrix halves the usable digits,
    which is acceptable for the small, well-scaled descriptor matrices this
    is used on.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {A.shape}")
    return pinv_psd(A.T @ A, tol_rel).pinv @ A.T
