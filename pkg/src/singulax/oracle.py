"""
Whole-trajectory reference computations.

The a-posteriori set over a horizon ``N`` is the sublevel set
``J(X) <= 1`` of the stacked weighted fit::

    J(X) = ||FF X - nominal||_1^2 + ||Y - HH X||_2^2

with ``FF`` block bidiagonal (``F_k`` on the diagonal, ``-C_{k-1}`` below)
and ``HH`` block diagonal. The batch routines here solve that problem in one
shot with numpy's SVD least squares, independently of the observer's
Jacobi-based recursion, so the two can be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import observer
from .errors import DimensionMismatch, InfeasibleData
from .model import DescriptorSystem

LSTSQ_RCOND = 1e-10
MEMBERSHIP_TOL = 1e-8


def _block_diag(blocks) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


@dataclass(frozen=True)
class BlockSystem:
    """Stacked matrices of the whole-horizon problem.

    ``weight1`` is block diagonal in ``(S, S_0, ..., S_{N-1})`` and ``weight2``
    in ``(R_0, ..., R_N)``. ``nominal`` stacks ``(prior, fbar_0, ...)``.
    """

    N: int
    n: int
    FF: np.ndarray
    HH: np.ndarray
    weight1: np.ndarray
    weight2: np.ndarray
    nominal: np.ndarray

    def weighted_design(self) -> np.ndarray:
        """``A = [L1' FF; L2' HH]`` with ``W = L L'`` so that ``A'A`` is the normal matrix."""
        L1 = np.linalg.cholesky(self.weight1)
        L2 = np.linalg.cholesky(self.weight2)
        return np.vstack([L1.T @ self.FF, L2.T @ self.HH])

    def weighted_target(self, Y) -> np.ndarray:
        L1 = np.linalg.cholesky(self.weight1)
        L2 = np.linalg.cholesky(self.weight2)
        return np.concatenate([L1.T @ self.nominal, L2.T @ Y])

    def normal_matrix(self) -> np.ndarray:
        return self.FF.T @ self.weight1 @ self.FF + self.HH.T @ self.weight2 @ self.HH

    def cost(self, X, Y) -> float:
        """``J(X)`` for stacked states ``X`` and stacked measurements ``Y``."""
        X = np.asarray(X, dtype=float).ravel()
        e1 = self.FF @ X - self.nominal
        e2 = np.asarray(Y, dtype=float).ravel() - self.HH @ X
        return float(e1 @ self.weight1 @ e1 + e2 @ self.weight2 @ e2)


def build_block_system(sys: DescriptorSystem, N: int) -> BlockSystem:
    if N < 0:
        raise ValueError("N must be nonnegative")
    n, m = sys.n, sys.m
    FF = np.zeros(((N + 1) * m, (N + 1) * n))
    FF[:m, :n] = sys.F(0)
    for k in range(1, N + 1):
        FF[k * m:(k + 1) * m, k * n:(k + 1) * n] = sys.F(k)
        FF[k * m:(k + 1) * m, (k - 1) * n:k * n] = -sys.C(k - 1)
    HH = _block_diag([sys.H(k) for k in range(N + 1)])
    W1 = _block_diag([sys.S] + [sys.S_seq(k) for k in range(N)])
    W2 = _block_diag([sys.R_seq(k) for k in range(N + 1)])
    nominal = np.concatenate([sys.prior_vector()]
                             + [sys.nominal_input(k) for k in range(N)])
    return BlockSystem(N=N, n=n, FF=FF, HH=HH, weight1=W1, weight2=W2,
                       nominal=nominal)


@dataclass(frozen=True)
class SmootherResult:
    xhat: np.ndarray
    cost: float


def _stack_y(sys, y, N):
    Y = np.asarray(y, dtype=float)
    if N is None:
        N = Y.shape[0] - 1
    if Y.shape != (N + 1, sys.p):
        raise DimensionMismatch(
            f"measurements have shape {Y.shape}, expected ({N + 1}, {sys.p})")
    return Y, N


def batch_estimate(sys: DescriptorSystem, y, N: int | None = None) -> SmootherResult:
    """Minimum-norm minimizer of the stacked weighted fit ``J``."""
    Y, N = _stack_y(sys, y, N)
    bs = build_block_system(sys, N)
    A = bs.weighted_design()
    b = bs.weighted_target(Y.ravel())
    X = np.linalg.lstsq(A, b, rcond=LSTSQ_RCOND)[0]
    return SmootherResult(xhat=X.reshape(N + 1, sys.n), cost=bs.cost(X, Y))


def smooth_backward(sys: DescriptorSystem, y, N: int | None = None,
                    tol: float = 0.0) -> SmootherResult:
    """Forward observer pass followed by backward substitution.

    ``xhat_N = Q_N^+ r_N`` and
    ``xhat_k = W_k^+ (C_k' S_k (F_{k+1} xhat_{k+1} - fbar_k) + r_k)``.
    The cost is the minimum of the last partial cost,
    ``alpha_N - (r_N, Q_N^+ r_N)``.
    """
    Y, N = _stack_y(sys, y, N)
    states = list(observer.iterate(sys, Y, tol))
    last = states[-1]
    xs = [observer.estimate(last)]
    for k in range(N - 1, -1, -1):
        st = states[k]
        C, S = sys.C(k), sys.S_seq(k)
        rhs = C.T @ S @ (sys.F(k + 1) @ xs[-1] - sys.nominal_input(k)) + st.r
        xs.append(st.innovation.pinv @ rhs)
    cost = last.alpha - float(last.r @ last.q_pinv.pinv @ last.r)
    return SmootherResult(xhat=np.array(xs[::-1]), cost=cost)


def _end_direction(sys: DescriptorSystem, N: int, l) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    if l.shape != (sys.n,):
        raise DimensionMismatch(f"direction has shape {l.shape}, expected ({sys.n},)")
    L = np.zeros((N + 1) * sys.n)
    L[N * sys.n:] = l
    return L


def _pinv_image(A: np.ndarray, L: np.ndarray) -> tuple[bool, np.ndarray]:
    z = np.linalg.lstsq(A.T, L, rcond=LSTSQ_RCOND)[0]
    resid = float(np.linalg.norm(A.T @ z - L))
    return resid <= MEMBERSHIP_TOL * float(np.linalg.norm(L)), z


def range_membership(sys: DescriptorSystem, N: int, l) -> tuple[bool, float]:
    """Whether ``[0, ..., 0, l]`` lies in range([FF' HH']), and its weighted image norm.

    Returns ``(member, norm_sq)`` with ``norm_sq = ||(A')^+ L||^2`` for the
    weighted design ``A``; this equals ``(L, M^+ L)`` for the normal matrix
    ``M = A'A`` and is ``inf`` for non-members.
    """
    L = _end_direction(sys, N, l)
    if not np.any(L):
        raise ValueError("direction must be nonzero")
    A = build_block_system(sys, N).weighted_design()
    member, z = _pinv_image(A, L)
    return member, float(z @ z) if member else math.inf


@dataclass(frozen=True)
class SupportResult:
    value: float
    point: np.ndarray | None
    beta: float


def support(sys: DescriptorSystem, y, l, N: int | None = None) -> SupportResult:
    """Support function of the a-posteriori set in the end direction ``l``.

    The set is ``Xc + {Z : (M Z, Z) <= beta}`` with ``Xc`` the batch
    minimizer and ``beta = 1 - J(Xc)``, so the maximum of ``(L, X)`` is
    attained at ``Xc + sqrt(beta) M^+ L / sqrt((M^+ L, L))``.
    ``point`` is that maximizer, or ``None`` when the value is infinite.
    """
    Y, N = _stack_y(sys, y, N)
    bs = build_block_system(sys, N)
    A = bs.weighted_design()
    X = np.linalg.lstsq(A, bs.weighted_target(Y.ravel()), rcond=LSTSQ_RCOND)[0]
    J = bs.cost(X, Y)
    beta = 1.0 - J
    if beta < -observer.INFEASIBLE_TOL * max(1.0, J):
        raise InfeasibleData(f"residual budget {beta:.6g} < 0 over horizon {N}")
    beta = max(beta, 0.0)
    L = _end_direction(sys, N, l)
    member, z = _pinv_image(A, L)
    if not member:
        return SupportResult(value=math.inf, point=None, beta=beta)
    norm_sq = float(z @ z)
    center_value = float(L @ X)
    if norm_sq == 0.0:
        return SupportResult(value=center_value, point=X.reshape(N + 1, sys.n), beta=beta)
    ML = np.linalg.lstsq(A, z, rcond=LSTSQ_RCOND)[0]
    point = X + math.sqrt(beta) * ML / math.sqrt(norm_sq)
    return SupportResult(value=center_value + math.sqrt(beta * norm_sq),
                         point=point.reshape(N + 1, sys.n), beta=beta)


def support_function(sys: DescriptorSystem, y, N: int | None, l) -> float:
    return support(sys, y, l, N).value
