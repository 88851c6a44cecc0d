"""
Deterministic-fit Kalman recursion for regular descriptor systems.

Valid when every stacked ``[F_k; H_k]`` has full column rank::

    P_0 = (F_0'F_0 + H_0'H_0)^{-1},   x_0 = P_0 (F_0'q + H_0'y_0)
    V   = (E + C P C')^{-1}
    P_k = (F_k' V F_k + H_k'H_k)^{-1}
    x_k = P_k F_k' V C x_{k-1} + P_k H_k' R_k y_k

Under unit weights this coincides with the minimax observer:
``P_k = Q_k^{-1}`` and ``x_k = Q_k^+ r_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import observer
from .errors import DimensionMismatch, RankDeficient, SingularInnovation
from .model import DescriptorSystem
from .psdlinalg import pinv_psd


@dataclass(frozen=True)
class KalmanState:
    k: int
    P: np.ndarray
    xhat: np.ndarray


def _check_rank(F, H, k, tol):
    # rank [F; H] == rank(F'F + H'H)
    res = pinv_psd(F.T @ F + H.T @ H, tol)
    if res.rank < F.shape[1]:
        raise RankDeficient(
            f"rank [F_k; H_k] = {res.rank} < n = {F.shape[1]} at step k={k}", step=k)


def _inverse(M, n, k, tol):
    res = pinv_psd(M, tol)
    if res.rank < n:
        raise RankDeficient(f"information matrix is singular at step k={k}", step=k)
    return res.pinv


def kalman_init(sys: DescriptorSystem, q, y0, tol: float = 0.0) -> KalmanState:
    q = np.asarray(q, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if q.shape != (sys.m,) or y0.shape != (sys.p,):
        raise DimensionMismatch("q or y0 has the wrong dimension")
    F, H = sys.F(0), sys.H(0)
    _check_rank(F, H, 0, tol)
    P = _inverse(F.T @ F + H.T @ H, sys.n, 0, tol)
    return KalmanState(k=0, P=P, xhat=P @ (F.T @ q + H.T @ y0))


def kalman_step(state: KalmanState, sys: DescriptorSystem, y_next,
                tol: float = 0.0) -> KalmanState:
    """One update. ``R_k`` appears only in the measurement term, as written
    in the recursion; the covariance update is unweighted.
    """
    y = np.asarray(y_next, dtype=float)
    if y.shape != (sys.p,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({sys.p},)")
    k = state.k + 1
    C = sys.C(state.k)
    F, H, R = sys.F(k), sys.H(k), sys.R_seq(k)
    _check_rank(F, H, k, tol)
    innov = pinv_psd(np.eye(sys.m) + C @ state.P @ C.T, tol)
    if innov.rank < sys.m:
        raise SingularInnovation(f"E + C P C' is singular at step k={k}")
    V = innov.pinv
    P = _inverse(F.T @ V @ F + H.T @ H, sys.n, k, tol)
    xhat = P @ F.T @ V @ C @ state.xhat + P @ H.T @ R @ y
    return KalmanState(k=k, P=0.5 * (P + P.T), xhat=xhat)


def kalman_run(sys: DescriptorSystem, q, y, tol: float = 0.0) -> list[KalmanState]:
    states = [kalman_init(sys, q, y[0], tol)]
    for yk in y[1:]:
        states.append(kalman_step(states[-1], sys, yk, tol))
    return states


@dataclass(frozen=True)
class KalmanComparison:
    deviations: np.ndarray
    identity_errors: np.ndarray
    causality: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations))

    @property
    def max_identity_error(self) -> float:
        return float(np.max(self.identity_errors))


def compare(sys: DescriptorSystem, q, y, N: int | None = None,
            tol: float = 0.0) -> KalmanComparison:
    """Run both recursions under unit weights and prior ``q``.

    Per step records ``||Q_k^+ r_k - xhat_{k|k}||_inf``, ``||P_k Q_k - E||_max``
    and the causality index, which must equal ``n``.
    """
    Y = np.asarray(y, dtype=float)
    if N is not None:
        Y = Y[:N + 1]
    unit = sys.with_unit_weights(prior=q)
    ks = kalman_run(unit, q, Y, tol)
    devs, ids, ranks = [], [], []
    for kst, ost in zip(ks, observer.iterate(unit, Y, tol)):
        rank = observer.causality_index(ost)
        if rank < sys.n:
            raise RankDeficient(f"causality index {rank} < n at step k={ost.k}",
                                step=ost.k)
        devs.append(float(np.max(np.abs(observer.estimate(ost) - kst.xhat))))
        ids.append(float(np.max(np.abs(kst.P @ ost.Q - np.eye(sys.n)))))
        ranks.append(rank)
    return KalmanComparison(deviations=np.array(devs), identity_errors=np.array(ids),
                            causality=np.array(ranks))


def equivalence_check(sys: DescriptorSystem, q, y, N: int | None = None,
                      tol: float = 0.0) -> float:
    """Largest deviation between the Kalman and minimax estimates."""
    return compare(sys, q, y, N, tol).max_deviation
