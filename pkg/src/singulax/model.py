"""
Time-varying descriptor systems and trajectory simulation.

A descriptor system evolves as::

    F_{k+1} x_{k+1} - C_k x_k = f_k,    F_0 x_0 = q,    y_k = H_k x_k + g_k

with rectangular ``F_k``, ``C_k`` (m x n) and ``H_k`` (p x n). The unknown
triple ``(q, {f_k}, {g_k})`` is bounded by the weighted energy constraint::

    (S q, q) + sum_{k<N} (S_k f_k, f_k) + sum_{k<=N} (R_k g_k, g_k) <= 1

Matrix families are plain callables ``k -> ndarray``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InconsistentStep
from .psdlinalg import min_eigenvalue, pinv_rect, sym_psd

MatrixFamily = Callable[[int], np.ndarray]
VectorGen = Callable[[int], np.ndarray]

STEP_RESIDUAL_TOL = 1e-9


def constant(M) -> MatrixFamily:
    """Time-invariant family returning ``M`` at every step."""
    A = np.array(M, dtype=float)
    A.setflags(write=False)
    return lambda k: A


def sequence(mats: Sequence, repeat_last: bool = True) -> MatrixFamily:
    """Family given by an explicit per-step list.

    Steps past the end of the list reuse the last entry when ``repeat_last``
    is set and raise ``IndexError`` otherwise.
    """
    arrs = [np.array(M, dtype=float) for M in mats]
    if not arrs:
        raise ValueError("empty per-step list")
    for A in arrs:
        A.setflags(write=False)

    def family(k: int) -> np.ndarray:
        if k < len(arrs):
            return arrs[k]
        if repeat_last:
            return arrs[-1]
        raise IndexError(f"no matrix given for step {k} (list has {len(arrs)})")

    return family


@dataclass(frozen=True)
class DescriptorSystem:
    """Plant, measurement model and uncertainty weights.

    ``known_input`` and ``prior`` are the nominal values of ``f_k`` and ``q``;
    the uncertainty constraint bounds the deviations from them. Both default
    to zero.
    """

    n: int
    m: int
    p: int
    F: MatrixFamily
    C: MatrixFamily
    H: MatrixFamily
    S: np.ndarray
    S_seq: MatrixFamily
    R_seq: MatrixFamily
    known_input: Optional[VectorGen] = None
    prior: Optional[np.ndarray] = None
    name: str = field(default="custom", compare=False)

    def nominal_input(self, k: int) -> np.ndarray:
        if self.known_input is None:
            return np.zeros(self.m)
        return np.asarray(self.known_input(k), dtype=float)

    def prior_vector(self) -> np.ndarray:
        if self.prior is None:
            return np.zeros(self.m)
        return np.asarray(self.prior, dtype=float)

    def validate(self, steps: int) -> None:
        """Check dimensions and weight definiteness for steps ``0..steps``."""
        _shape(self.S, (self.m, self.m), "S")
        _check_pd(self.S, "S")
        _shape(self.prior_vector(), (self.m,), "prior")
        for k in range(steps + 1):
            _shape(self.F(k), (self.m, self.n), f"F({k})")
            _shape(self.C(k), (self.m, self.n), f"C({k})")
            _shape(self.H(k), (self.p, self.n), f"H({k})")
            _shape(self.S_seq(k), (self.m, self.m), f"S_seq({k})")
            _shape(self.R_seq(k), (self.p, self.p), f"R_seq({k})")
            _shape(self.nominal_input(k), (self.m,), f"known_input({k})")
            _check_pd(self.S_seq(k), f"S_seq({k})")
            _check_pd(self.R_seq(k), f"R_seq({k})")

    def with_unit_weights(self, prior=None) -> "DescriptorSystem":
        """Copy with ``S = S_k = E``, ``R_k = E``, no known input."""
        Im, Ip = np.eye(self.m), np.eye(self.p)
        return replace(
            self, S=Im, S_seq=constant(Im), R_seq=constant(Ip),
            known_input=None,
            prior=None if prior is None else np.asarray(prior, dtype=float),
        )


def _shape(A, expected, what):
    if np.shape(A) != expected:
        raise DimensionMismatch(f"{what} has shape {np.shape(A)}, expected {expected}")


def _check_pd(A, what):
    sym_psd(A)
    if min_eigenvalue(A) <= 1e-12 * max(1.0, float(np.max(np.abs(A)))):
        raise ValueError(f"{what} must be positive definite")


def make_system(F, C, H, S=None, S_seq=None, R_seq=None, known_input=None,
                prior=None, name="custom") -> DescriptorSystem:
    """Build a system from matrices or matrix families.

    Arrays are taken as time-invariant; callables are used as given. Missing
    weights default to identities.
    """
    def fam(X):
        return X if callable(X) else constant(X)

    F, C, H = fam(F), fam(C), fam(H)
    m, n = np.shape(F(0))
    p = np.shape(H(0))[0]
    S = np.eye(m) if S is None else np.array(S, dtype=float)
    S_seq = constant(np.eye(m)) if S_seq is None else fam(S_seq)
    R_seq = constant(np.eye(p)) if R_seq is None else fam(R_seq)
    if known_input is not None and not callable(known_input):
        v = np.array(known_input, dtype=float)
        known_input = lambda k: v
    if prior is not None:
        prior = np.array(prior, dtype=float)
    return DescriptorSystem(n=n, m=m, p=p, F=F, C=C, H=H, S=S, S_seq=S_seq,
                            R_seq=R_seq, known_input=known_input, prior=prior,
                            name=name)


def scalar_system() -> DescriptorSystem:
    """``F = C = H = S = S_k = R_k = [1]``; handy for hand-checkable values."""
    one = np.ones((1, 1))
    return make_system(one, one, one, name="scalar")


_PAPER_H0 = np.array([
    [0.6, 0.96, 0.0],
    [1000.0, 2.3, 0.0],
    [1.0, 0.1, 0.0],
    [0.0, 0.0, 0.0],
])
_PAPER_F = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_PAPER_C = np.array([[1 / 40, 1 / 2, 0.0], [1 / 10, 1 / 4, 3 / 10]])


def _paper_H(k: int) -> np.ndarray:
    if k == 0:
        return _PAPER_H0
    odd = k % 2
    return np.array([
        [0.6 * k, float(k), 0.0],
        [100.0 * k, k / 100, 0.0],
        [0.0, 0.005, 150.0 * k * odd],
        [0.05, 10.0 * k, 0.0],
    ])


def _paper_R(k: int) -> np.ndarray:
    return np.diag([1 / (11 * (k + 1)), 1 / (22 * (k + 1)),
                    1 / (33 * (k + 1)), 1 / (44 * (k + 1))])


def _paper_S(k: int) -> np.ndarray:
    return np.diag([1 / (35 * (k + 1)), 1 / (70 * (k + 1))])


def paper_example_system() -> DescriptorSystem:
    """The 3-state, 2-equation, 4-output noncausal benchmark system.

    ``F_k = [I_2 | 0]`` never sees the third state, and ``H_k`` observes it
    only at odd steps, so the causality index alternates with ``k``.
    """
    return DescriptorSystem(
        n=3, m=2, p=4,
        F=constant(_PAPER_F), C=constant(_PAPER_C), H=_paper_H,
        S=np.diag([1 / 60, 1 / 120]), S_seq=_paper_S, R_seq=_paper_R,
        name="paper_example",
    )


PAPER_X0 = np.array([1.0, 1.0, 0.0])


def random_system(rng: np.random.Generator, n: int, m: int, p: int,
                  steps: int, *, regular: bool = False,
                  unit_weights: bool = False, dynamics_scale: float = 0.5,
                  name: str = "random") -> DescriptorSystem:
    """Random time-varying system with ``steps + 1`` distinct matrices.

    With ``regular=True`` every stacked ``[F_k; H_k]`` is built from an SVD
    with singular values in [0.5, 1.5], so it has full column rank and
    bounded conditioning (requires ``m + p >= n``).
    """
    if regular and m + p < n:
        raise ValueError("a regular system needs m + p >= n")

    def spd(d):
        A = rng.normal(size=(d, d))
        return A @ A.T / d + 0.5 * np.eye(d)

    Fs, Cs, Hs, Ss, Rs = [], [], [], [], []
    for _ in range(steps + 1):
        if regular:
            # stacked [F; H] = U diag(s) V' with s in [0.5, 1.5]
            U, _ = np.linalg.qr(rng.normal(size=(m + p, n)))
            V, _ = np.linalg.qr(rng.normal(size=(n, n)))
            FH = (U * rng.uniform(0.5, 1.5, size=n)) @ V.T
            Fk, Hk = FH[:m], FH[m:]
        else:
            Fk = rng.normal(size=(m, n))
            Hk = rng.normal(size=(p, n))
        Fs.append(Fk)
        Hs.append(Hk)
        Cs.append(dynamics_scale * rng.normal(size=(m, n)))
        Ss.append(np.eye(m) if unit_weights else spd(m))
        Rs.append(np.eye(p) if unit_weights else spd(p))
    S = np.eye(m) if unit_weights else spd(m)
    return make_system(sequence(Fs), sequence(Cs), sequence(Hs), S=S,
                       S_seq=sequence(Ss), R_seq=sequence(Rs), name=name)


@dataclass(frozen=True)
class Trajectory:
    """A simulated run over steps ``0..N``.

    ``f`` holds the full right-hand sides ``f_k`` (nominal input included);
    ``constraint_value`` measures their deviation from the nominal values.
    """

    x: np.ndarray
    f: np.ndarray
    q: np.ndarray
    g: np.ndarray
    y: np.ndarray
    constraint_value: float

    @property
    def steps(self) -> int:
        return self.x.shape[0] - 1


def constraint_value(sys: DescriptorSystem, q, f, g) -> float:
    """Weighted energy of an uncertainty triple over a horizon ``N``.

    ``f`` must hold ``N`` vectors and ``g`` hold ``N + 1``. Deviations are
    taken from ``sys.prior`` and ``sys.known_input`` (zero by default). The
    triple is admissible iff the value is at most one.
    """
    q = np.asarray(q, dtype=float)
    f = np.asarray(f, dtype=float).reshape(-1, sys.m)
    g = np.asarray(g, dtype=float).reshape(-1, sys.p)
    if q.shape != (sys.m,):
        raise DimensionMismatch(f"q has shape {q.shape}, expected ({sys.m},)")
    if g.shape[0] != f.shape[0] + 1:
        raise DimensionMismatch(
            f"got {f.shape[0]} inputs and {g.shape[0]} noises; need N and N+1")
    dq = q - sys.prior_vector()
    total = float(dq @ sys.S @ dq)
    for k, fk in enumerate(f):
        d = fk - sys.nominal_input(k)
        total += float(d @ sys.S_seq(k) @ d)
    for k, gk in enumerate(g):
        total += float(gk @ sys.R_seq(k) @ gk)
    return total


def simulate(sys: DescriptorSystem, N: int, x0, f_gen: VectorGen | None = None,
             g_gen: VectorGen | None = None, free_gen: VectorGen | None = None,
             tol_rel: float = 0.0) -> Trajectory:
    """Generate a trajectory of the descriptor system.

    Each step takes the minimum-norm solution of
    ``F_{k+1} x = C_k x_k + f_k`` and adds the component of ``free_gen(k)``
    lying in ker F_{k+1}. ``f_gen`` produces the disturbance on top of the
    nominal input.

    Raises
    ------
    InconsistentStep
        If ``C_k x_k + f_k`` is not in the range of ``F_{k+1}``.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    sys.validate(N)
    x0 = np.asarray(x0, dtype=float)
    _shape(x0, (sys.n,), "x0")
    zero_f, zero_g = np.zeros(sys.m), np.zeros(sys.p)

    xs = [x0]
    fs = []
    for k in range(N):
        fk = sys.nominal_input(k) + (zero_f if f_gen is None else np.asarray(f_gen(k), float))
        F1 = sys.F(k + 1)
        rhs = sys.C(k) @ xs[-1] + fk
        Fp = pinv_rect(F1, tol_rel)
        x1 = Fp @ rhs
        if free_gen is not None:
            z = np.asarray(free_gen(k), dtype=float)
            x1 = x1 + z - Fp @ (F1 @ z)
        resid = float(np.linalg.norm(F1 @ x1 - rhs))
        if resid > STEP_RESIDUAL_TOL * (1.0 + float(np.linalg.norm(rhs))):
            raise InconsistentStep(
                f"step {k} -> {k + 1}: C x + f is not in range(F) "
                f"(residual {resid:.3g})", step=k + 1)
        xs.append(x1)
        fs.append(fk)

    x = np.array(xs)
    f = np.array(fs).reshape(N, sys.m)
    g = np.array([zero_g if g_gen is None else np.asarray(g_gen(k), float)
                  for k in range(N + 1)])
    y = np.array([sys.H(k) @ x[k] + g[k] for k in range(N + 1)])
    q = sys.F(0) @ x0
    return Trajectory(x=x, f=f, q=q, g=g, y=y,
                      constraint_value=constraint_value(sys, q, f, g))


def _f_pattern(k: int, m: int) -> np.ndarray:
    # (sin(k+1), cos 2k) extended by alternating higher harmonics
    out = np.empty(m)
    for j in range(m):
        out[j] = np.sin((j + 1) * (k + 1)) if j % 2 == 0 else np.cos(2 * j * k)
    return out


_G_FREQS = (3, 1, 5, 7)


def _g_pattern(k: int, p: int) -> np.ndarray:
    # (sin 3k, cos k, sin 5k, cos 7k) extended by odd frequencies
    out = np.empty(p)
    for j in range(p):
        w = _G_FREQS[j] if j < len(_G_FREQS) else 2 * j + 1
        out[j] = np.sin(w * k) if j % 2 == 0 else np.cos(w * k)
    return out


def _free_pattern(k: int, n: int) -> np.ndarray:
    return np.array([np.cos(0.5 * k + j) for j in range(n)])


@dataclass(frozen=True)
class Generators:
    f_gen: VectorGen
    g_gen: VectorGen
    free_gen: Optional[VectorGen]
    f_amplitude: float
    g_amplitude: float


def harmonic_generators(sys: DescriptorSystem, N: int, x0, *,
                        budget: float = 0.99,
                        free_amplitude: float = 0.0) -> Generators:
    """Deterministic bounded disturbances scaled to fit the uncertainty set.

    The unit-amplitude energies of ``f`` and ``g`` are computed over the
    horizon and the amplitudes chosen so each takes half of what ``budget``
    leaves after the initial-condition term. The kernel component
    ``free_amplitude * cos(k/2 + j)`` does not enter the constraint.
    """
    x0 = np.asarray(x0, dtype=float)
    dq = sys.F(0) @ x0 - sys.prior_vector()
    remaining = budget - float(dq @ sys.S @ dq)
    e_f = sum(float(v @ sys.S_seq(k) @ v)
              for k in range(N) for v in [_f_pattern(k, sys.m)])
    e_g = sum(float(v @ sys.R_seq(k) @ v)
              for k in range(N + 1) for v in [_g_pattern(k, sys.p)])
    a = np.sqrt(0.5 * remaining / e_f) if remaining > 0 and e_f > 0 else 0.0
    b = np.sqrt(0.5 * remaining / e_g) if remaining > 0 and e_g > 0 else 0.0
    free = None
    if free_amplitude:
        free = lambda k: free_amplitude * _free_pattern(k, sys.n)
    return Generators(
        f_gen=lambda k: a * _f_pattern(k, sys.m),
        g_gen=lambda k: b * _g_pattern(k, sys.p),
        free_gen=free, f_amplitude=float(a), g_amplitude=float(b),
    )


def random_generators(sys: DescriptorSystem, N: int, x0,
                      rng: np.random.Generator, *, budget: float = 0.99,
                      free_amplitude: float = 0.0) -> Generators:
    """Seeded Gaussian disturbances, rescaled to the same energy budget."""
    x0 = np.asarray(x0, dtype=float)
    F_raw = rng.normal(size=(N, sys.m))
    G_raw = rng.normal(size=(N + 1, sys.p))
    Z_raw = rng.normal(size=(N, sys.n))
    dq = sys.F(0) @ x0 - sys.prior_vector()
    remaining = budget - float(dq @ sys.S @ dq)
    e_f = sum(float(F_raw[k] @ sys.S_seq(k) @ F_raw[k]) for k in range(N))
    e_g = sum(float(G_raw[k] @ sys.R_seq(k) @ G_raw[k]) for k in range(N + 1))
    a = np.sqrt(0.5 * remaining / e_f) if remaining > 0 and e_f > 0 else 0.0
    b = np.sqrt(0.5 * remaining / e_g) if remaining > 0 and e_g > 0 else 0.0
    free = None
    if free_amplitude:
        free = lambda k: free_amplitude * Z_raw[k]
    return Generators(f_gen=lambda k: a * F_raw[k], g_gen=lambda k: b * G_raw[k],
                      free_gen=free, f_amplitude=float(a), g_amplitude=float(b))
