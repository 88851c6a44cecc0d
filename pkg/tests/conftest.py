"""Shared random-instance generators and the acceptance summary hook."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from singulax import model, observer, oracle

# Relative eigenvalues inside this band sit too close to the rank threshold
# for two independent solvers to agree on the rank.
AMBIGUOUS_BAND = (1e-14, 1e-6)

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@dataclass
class Instance:
    sys: model.DescriptorSystem
    x: np.ndarray
    y: np.ndarray
    states: list

    @property
    def N(self) -> int:
        return len(self.y) - 1


def _ambiguous(M: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    scale = max(float(w[-1]), 1.0)
    rel = np.abs(w) / scale
    return bool(np.any((rel > AMBIGUOUS_BAND[0]) & (rel < AMBIGUOUS_BAND[1])))


def _stacked_ambiguous(sys, N) -> bool:
    A = oracle.build_block_system(sys, N).weighted_design()
    s = np.linalg.svd(A, compute_uv=False)
    rel = s / s[0]
    return bool(np.any((rel > 1e-10) & (rel < 1e-4)))


def feasible_data(sys: model.DescriptorSystem, N: int, rng: np.random.Generator,
                  level: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Random states and measurements scaled onto the uncertainty level ``level``.

    Random systems have zero prior and zero nominal input, so the constraint
    is a quadratic form in ``(x, g)`` and scaling both fixes its value.
    """
    x = rng.normal(size=(N + 1, sys.n))
    g = rng.normal(size=(N + 1, sys.p))
    q = sys.F(0) @ x[0]
    f = np.array([sys.F(k + 1) @ x[k + 1] - sys.C(k) @ x[k] for k in range(N)])
    f = f.reshape(N, sys.m)
    v = model.constraint_value(sys, q, f, g)
    c = np.sqrt(level / v)
    x, g = c * x, c * g
    y = np.array([sys.H(k) @ x[k] + g[k] for k in range(N + 1)])
    return x, y


def random_instance(rng: np.random.Generator, *, n_max: int = 4, m_max: int = 4,
                    p_max: int = 3, N_max: int = 15, regular: bool = False,
                    unit_weights: bool = False, screen: bool = True,
                    max_tries: int = 50) -> Instance:
    """A random system with feasible data, screened for ambiguous ranks."""
    for _ in range(max_tries):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, m_max + 1))
        p = int(rng.integers(1, p_max + 1))
        if regular and m + p < n:
            continue
        N = int(rng.integers(0, N_max + 1))
        sys = model.random_system(rng, n, m, p, N, regular=regular,
                                  unit_weights=unit_weights)
        x, y = feasible_data(sys, N, rng)
        states = list(observer.iterate(sys, y))
        if screen and (any(_ambiguous(s.Q) or _ambiguous(s.Q + s.sys.C(s.k).T
                                                         @ s.sys.S_seq(s.k) @ s.sys.C(s.k))
                           for s in states) or _stacked_ambiguous(sys, N)):
            continue
        return Instance(sys=sys, x=x, y=y, states=states)
    raise RuntimeError("could not draw an unambiguous instance")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
