"""
Online minimax observer for descriptor systems.

The observer folds measurements into the sufficient statistic
``(Q_k, r_k, alpha_k)``. With ``W_k = Q_k + C_k' S_k C_k`` and
``G_k = S_k - S_k C_k W_k^+ C_k' S_k``::

    Q_{k+1}     = H' R H + F' G_k F
    r_{k+1}     = F' S_k C_k W_k^+ r_k + H' R y_{k+1} + F' G_k fbar_k
    alpha_{k+1} = alpha_k + (R y, y) + (S_k fbar_k, fbar_k) - (W_k^+ d, d)
    d           = r_k - C_k' S_k fbar_k

where ``F, H, R`` are taken at step ``k+1`` and ``fbar_k`` is the nominal
input (zero unless the system declares one). The estimate is
``xhat_k = Q_k^+ r_k``; directions outside range(Q_k) have unbounded error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InfeasibleData, ZeroDirection
from .model import DescriptorSystem
from .psdlinalg import PinvResult, pinv_psd

RANGE_TOL = 1e-8
INFEASIBLE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ObserverState:
    k: int
    Q: np.ndarray
    r: np.ndarray
    alpha: float
    sys: DescriptorSystem
    tol: float = 0.0

    @cached_property
    def q_pinv(self) -> PinvResult:
        return pinv_psd(self.Q, self.tol)

    @cached_property
    def innovation(self) -> PinvResult:
        """Pseudoinverse of ``W_k = Q_k + C_k' S_k C_k``."""
        C, S = self.sys.C(self.k), self.sys.S_seq(self.k)
        return pinv_psd(self.Q + C.T @ S @ C, self.tol)

    @property
    def beta(self) -> float:
        """Residual budget ``1 - alpha + (Q^+ r, r)``."""
        return 1.0 - self.alpha + float(self.r @ self.q_pinv.pinv @ self.r)


@dataclass(frozen=True)
class DirectionalError:
    direction: np.ndarray
    finite: bool
    sigma: float
    estimate_component: float


@dataclass(frozen=True)
class Ellipsoid:
    """The set ``{x : (Q x, x) - 2 (Q c, x) + alpha <= 1}``.

    Unbounded along ker Q when Q is singular.
    """

    Q: np.ndarray
    center: np.ndarray
    alpha: float

    @property
    def level(self) -> float:
        """Squared Q-radius around the center: ``1 - alpha + (Q c, c)``."""
        c = self.center
        return 1.0 - self.alpha + float(c @ self.Q @ c)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x - 2.0 * (self.Q @ self.center) @ x + self.alpha)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.value(x) <= 1.0 + tol * max(1.0, abs(self.alpha))


@dataclass(frozen=True)
class MinimaxReport:
    k: int
    estimate: np.ndarray
    causality_index: int
    rho: float
    beta: float
    directional: tuple = ()


def _vec(y, p: int, what: str = "y") -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (p,):
        raise DimensionMismatch(f"{what} has shape {y.shape}, expected ({p},)")
    return y


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _complement_factor(state: ObserverState, C: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Factor ``T`` with ``T T' = S - S C W^+ C' S``.

    With ``S = L L'``, ``Q = K K'`` and ``Z = [K'; L'C]`` we have ``W = Z'Z``
    and ``L'C W^+ C'L`` is the lower-right block of the projector onto
    range(Z). Its complement is therefore ``E' U0 U0' E`` for an orthonormal
    basis ``U0`` of range(Z)^perp and ``E`` selecting the lower rows. This
    Gram form stays PSD where the direct difference cancels to noise.
    """
    L = np.linalg.cholesky(S)
    qp = state.q_pinv
    K = qp.range_basis * np.sqrt(qp.eigenvalues[:qp.rank])
    Z = np.vstack([K.T, L.T @ C])
    zz = pinv_psd(Z @ Z.T, state.tol)
    U0 = zz.eigenvectors[:, zz.rank:]
    return L @ U0[qp.rank:, :]


def init(sys: DescriptorSystem, y0, tol: float = 0.0) -> ObserverState:
    """Fold in the first measurement ``y_0``."""
    y0 = _vec(y0, sys.p, "y0")
    F, H, R, S = sys.F(0), sys.H(0), sys.R_seq(0), sys.S
    g = sys.prior_vector()
    FL = F.T @ np.linalg.cholesky(S)
    HR = H.T @ np.linalg.cholesky(R)
    Q = _sym(FL @ FL.T + HR @ HR.T)
    r = F.T @ S @ g + H.T @ R @ y0
    alpha = float(g @ S @ g + y0 @ R @ y0)
    return ObserverState(k=0, Q=Q, r=r, alpha=alpha, sys=sys, tol=tol)


def step(state: ObserverState, y_next) -> ObserverState:
    """Advance the sufficient statistic by one measurement."""
    sys, k = state.sys, state.k
    y = _vec(y_next, sys.p, "y_next")
    C, S = sys.C(k), sys.S_seq(k)
    F, H, R = sys.F(k + 1), sys.H(k + 1), sys.R_seq(k + 1)
    fbar = sys.nominal_input(k)

    Wp = state.innovation.pinv
    SC = S @ C
    T = _complement_factor(state, C, S)
    G = T @ T.T
    FT = F.T @ T
    HR = H.T @ np.linalg.cholesky(R)
    Q = _sym(HR @ HR.T + FT @ FT.T)
    r = F.T @ (SC @ (Wp @ state.r)) + H.T @ (R @ y) + F.T @ (G @ fbar)
    d = state.r - SC.T @ fbar
    alpha = state.alpha + float(y @ R @ y) + float(fbar @ S @ fbar) - float(d @ Wp @ d)
    return ObserverState(k=k + 1, Q=Q, r=r, alpha=alpha, sys=sys, tol=state.tol)


def iterate(sys: DescriptorSystem, ys: Iterable, tol: float = 0.0,
            state: Optional[ObserverState] = None) -> Iterator[ObserverState]:
    """Yield the observer state after each measurement.

    If ``state`` is given the measurements continue from it.
    """
    it = iter(ys)
    if state is None:
        try:
            first = next(it)
        except StopIteration:
            return
        state = init(sys, first, tol)
        yield state
    for y in it:
        state = step(state, y)
        yield state


def estimate(state: ObserverState) -> np.ndarray:
    return state.q_pinv.pinv @ state.r


def causality_index(state: ObserverState) -> int:
    """Dimension of the set of directions with finite minimax error."""
    return state.q_pinv.rank


def checked_beta(state: ObserverState) -> float:
    """``beta`` clamped at zero; raises InfeasibleData if clearly negative.

    The negativity threshold scales with ``alpha`` since beta is a difference
    of terms of that size.
    """
    b = state.beta
    if b < -INFEASIBLE_TOL * max(1.0, abs(state.alpha)):
        raise InfeasibleData(
            f"step {state.k}: residual budget {b:.6g} < 0, the measurements "
            "are not consistent with the uncertainty set")
    return max(b, 0.0)


def sigma_expression(state: ObserverState, l) -> float:
    """``sqrt(beta) * sqrt((Q^+ l, l))`` without the range check.

    For ``l`` outside range(Q) this is not the error (which is infinite);
    it is kept to expose exactly that discrepancy.
    """
    l = _vec(l, state.sys.n, "direction")
    return math.sqrt(checked_beta(state)) * math.sqrt(
        max(float(l @ state.q_pinv.pinv @ l), 0.0))


def in_range(state: ObserverState, l) -> bool:
    l = np.asarray(l, dtype=float)
    return float(np.linalg.norm(state.q_pinv.project(l) - l)) <= RANGE_TOL * float(np.linalg.norm(l))


def directional_error(state: ObserverState, l) -> DirectionalError:
    """Minimax a-posteriori error and estimate of ``(l, x_k)``."""
    l = _vec(l, state.sys.n, "direction")
    if not np.any(l):
        raise ZeroDirection("direction must be nonzero")
    finite = in_range(state, l)
    sigma = sigma_expression(state, l) if finite else math.inf
    return DirectionalError(direction=l, finite=finite, sigma=sigma,
                            estimate_component=float(l @ estimate(state)))


def global_error(state: ObserverState) -> float:
    """Worst-case squared distance ``beta / lambda_min(Q)``; ``inf`` if singular."""
    pr = state.q_pinv
    if pr.rank < state.sys.n:
        return math.inf
    return checked_beta(state) / float(pr.eigenvalues[-1])


def aposteriori_ellipsoid(state: ObserverState) -> Ellipsoid:
    return Ellipsoid(Q=state.Q.copy(), center=estimate(state), alpha=state.alpha)


def report(state: ObserverState, directions: Sequence | None = None) -> MinimaxReport:
    return MinimaxReport(
        k=state.k,
        estimate=estimate(state),
        causality_index=causality_index(state),
        rho=global_error(state),
        beta=checked_beta(state),
        directional=tuple(directional_error(state, l)
                          for l in (() if directions is None else directions)),
    )


def run(sys: DescriptorSystem, y: Sequence, directions: Sequence | None = None,
        tol: float = 0.0) -> list[MinimaxReport]:
    """One report per measurement; report ``k`` only uses ``y_0..y_k``."""
    if len(y) == 0:
        raise ValueError("need at least one measurement")
    return [report(s, directions) for s in iterate(sys, y, tol)]
