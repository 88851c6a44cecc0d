"""Command-line driver.

    singulax simulate|estimate|compare-kalman|verify --config CFG [--steps N]
             [--tol X] [--seed K] [--measurements CSV] --out PATH

Each command writes a CSV (header row, 17 significant digits, ``inf`` for
infinity) and a JSON sidecar next to it (``PATH`` with a ``.json`` suffix).
Errors go to stderr as a single ``E_CODE: message`` line and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import kalman, model, observer, oracle
from .errors import ConfigError, DimensionMismatch, InfeasibleData, SingulaxError
from .psdlinalg import pinv_rect

MAX_STACKED_DIM = 500
DEFAULT_STEPS = 10


@dataclass
class RunConfig:
    system: model.DescriptorSystem
    steps: int
    tol: float = 0.0
    directions: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    noise: dict = field(default_factory=dict)
    seed: int = 0
    measurements: Optional[str] = None
    output: Optional[str] = None

    @property
    def direction_list(self) -> np.ndarray:
        if self.directions is None:
            return np.eye(self.system.n)
        return self.directions


# ---------------------------------------------------------------------------
# config parsing

def _locate(text: str, key: str) -> str:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return f"line {i}"
    return "top level"


class _Parser:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, key: str, msg: str):
        raise ConfigError(f"{self.source}: {_locate(self.text, key)}: {key}: {msg}")

    def matrix(self, key, value, shape=None) -> np.ndarray:
        try:
            A = np.array(value, dtype=float)
        except (TypeError, ValueError):
            self.fail(key, "expected a numeric array")
        if A.ndim != 2:
            self.fail(key, f"expected a row-major 2-D array, got {A.ndim}-D")
        if shape is not None and A.shape != shape:
            self.fail(key, f"expected shape {shape}, got {A.shape}")
        return A

    def vector(self, key, value, size=None) -> np.ndarray:
        try:
            v = np.array(value, dtype=float)
        except (TypeError, ValueError):
            self.fail(key, "expected a numeric list")
        if v.ndim != 1 or (size is not None and v.shape[0] != size):
            self.fail(key, f"expected a vector of length {size}")
        return v

    def family(self, key, value, shape=None, vector=False):
        conv = self.vector if vector else self.matrix
        if isinstance(value, dict):
            if "per_step" not in value:
                self.fail(key, "family objects need a 'per_step' list")
            items = [conv(key, v, shape) for v in value["per_step"]]
            if not items:
                self.fail(key, "'per_step' is empty")
            return model.sequence(items, bool(value.get("repeat_last", True)))
        return model.constant(conv(key, value, shape))

    def system(self, entry, steps: int, seed: int) -> model.DescriptorSystem:
        if isinstance(entry, str):
            entry = {"builtin": entry}
        if not isinstance(entry, dict):
            self.fail("system", "expected a builtin name or an object")
        builtin = entry.get("builtin")
        if builtin == "paper_example":
            return model.paper_example_system()
        if builtin == "scalar":
            return model.scalar_system()
        if builtin == "random":
            rng = np.random.default_rng(seed)
            n, m, p = int(entry.get("n", 3)), int(entry.get("m", 2)), int(entry.get("p", 2))
            try:
                return model.random_system(
                    rng, n, m, p, steps, regular=bool(entry.get("regular", False)),
                    unit_weights=bool(entry.get("unit_weights", False)))
            except ValueError as e:
                self.fail("system", str(e))
        if builtin is not None:
            self.fail("builtin", f"unknown builtin system {builtin!r}")

        for key in ("F", "C", "H"):
            if key not in entry:
                self.fail(key, "missing")
        F0 = entry["F"]["per_step"][0] if isinstance(entry["F"], dict) else entry["F"]
        H0 = entry["H"]["per_step"][0] if isinstance(entry["H"], dict) else entry["H"]
        m, n = self.matrix("F", F0).shape
        p = self.matrix("H", H0).shape[0]
        kw: dict[str, Any] = dict(
            F=self.family("F", entry["F"], (m, n)),
            C=self.family("C", entry["C"], (m, n)),
            H=self.family("H", entry["H"], (p, n)),
        )
        if "S" in entry:
            kw["S"] = self.matrix("S", entry["S"], (m, m))
        if "S_seq" in entry:
            kw["S_seq"] = self.family("S_seq", entry["S_seq"], (m, m))
        if "R_seq" in entry:
            kw["R_seq"] = self.family("R_seq", entry["R_seq"], (p, p))
        if "known_input" in entry:
            kw["known_input"] = self.family("known_input", entry["known_input"], m, vector=True)
        if "prior" in entry:
            kw["prior"] = self.vector("prior", entry["prior"], m)
        return model.make_system(name=str(entry.get("name", "custom")), **kw)


def load_config(path: str | Path, *, steps: int | None = None, tol: float | None = None,
                seed: int | None = None, measurements: str | None = None,
                output: str | None = None) -> RunConfig:
    """Read a JSON run configuration; keyword arguments override its fields."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: line 1: the config must be a JSON object")
    P = _Parser(text, str(path))

    steps = int(raw.get("steps", DEFAULT_STEPS)) if steps is None else steps
    if steps < 0:
        P.fail("steps", "must be nonnegative")
    tol = float(raw.get("tol", 0.0)) if tol is None else tol
    if tol < 0 or (tol == 0 and "tol" in raw):
        P.fail("tol", "must be positive")
    seed = int(raw.get("seed", 0)) if seed is None else seed

    system = P.system(raw.get("system", "paper_example"), steps, seed)
    try:
        system.validate(0)
    except (DimensionMismatch, ValueError) as e:
        P.fail("system", str(e))
    directions = None
    if "directions" in raw:
        directions = np.array([P.vector("directions", d, system.n) for d in raw["directions"]])
        if not len(directions) or np.any(~directions.any(axis=1)):
            P.fail("directions", "need at least one nonzero direction")
    x0 = P.vector("x0", raw["x0"], system.n) if "x0" in raw else None
    q = P.vector("q", raw["q"], system.m) if "q" in raw else None
    noise = raw.get("noise", {})
    if isinstance(noise, str):
        noise = {"kind": noise}
    if noise.get("kind", "harmonic") not in ("harmonic", "random", "zero"):
        P.fail("kind", "noise kind must be harmonic, random or zero")
    return RunConfig(system=system, steps=steps, tol=tol, directions=directions,
                     x0=x0, q=q, noise=noise, seed=seed,
                     measurements=measurements or raw.get("measurements"),
                     output=output or raw.get("output"))


# ---------------------------------------------------------------------------
# data sources

def default_x0(sys: model.DescriptorSystem) -> np.ndarray:
    """``PAPER_X0`` for the builtin example; otherwise a point with ``F_0 x_0`` at the prior.

    The ones vector is projected so its range(F_0') part matches the prior,
    which leaves the whole budget to the disturbances.
    """
    if sys.name == "paper_example":
        return model.PAPER_X0.copy()
    F0 = sys.F(0)
    Fp = pinv_rect(F0)
    ones = np.ones(sys.n)
    return Fp @ sys.prior_vector() + ones - Fp @ (F0 @ ones)


def simulate_from_config(cfg: RunConfig) -> tuple[model.Trajectory, model.Generators | None]:
    sys, N = cfg.system, cfg.steps
    x0 = default_x0(sys) if cfg.x0 is None else cfg.x0
    kind = cfg.noise.get("kind", "harmonic")
    budget = float(cfg.noise.get("budget", 0.99))
    free = float(cfg.noise.get("free_amplitude", 1.0))
    if kind == "zero":
        return model.simulate(sys, N, x0, tol_rel=cfg.tol), None
    if kind == "random":
        gens = model.random_generators(sys, N, x0, np.random.default_rng(cfg.seed),
                                       budget=budget, free_amplitude=free)
    else:
        gens = model.harmonic_generators(sys, N, x0, budget=budget, free_amplitude=free)
    traj = model.simulate(sys, N, x0, gens.f_gen, gens.g_gen, gens.free_gen, tol_rel=cfg.tol)
    return traj, gens


def read_measurements(path: str, sys: model.DescriptorSystem,
                      steps: int | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Load ``y_1..y_p`` (and ``x_1..x_n`` if present) from a CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ycols = [f"y_{i + 1}" for i in range(sys.p)]
    xcols = [f"x_{i + 1}" for i in range(sys.n)]
    if not rows or any(c not in rows[0] for c in ycols):
        raise DimensionMismatch(f"{path}: need columns {', '.join(ycols)}")
    if steps is not None:
        rows = rows[:steps + 1]
    y = np.array([[float(r[c]) for c in ycols] for r in rows])
    x = None
    if all(c in rows[0] for c in xcols):
        x = np.array([[float(r[c]) for c in xcols] for r in rows])
    return y, x


def measurements_for(cfg: RunConfig, steps_given: bool):
    """Return ``(y, x_true, q)`` from the measurement file or a simulation."""
    if cfg.measurements:
        y, x = read_measurements(cfg.measurements, cfg.system,
                                 cfg.steps if steps_given else None)
        q = cfg.q if cfg.q is not None else (None if x is None else cfg.system.F(0) @ x[0])
        return y, x, q
    traj, _ = simulate_from_config(cfg)
    return traj.y, traj.x, cfg.q if cfg.q is not None else traj.q


# ---------------------------------------------------------------------------
# output

def fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def sidecar_path(out: Path) -> Path:
    side = out.with_suffix(".json")
    return side if side != out else out.with_name(out.name + ".meta.json")


def write_csv(out: Path, header: list[str], rows: list[list[str]]) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    sys = cfg.system
    traj, gens = simulate_from_config(cfg)
    header = (["k"] + [f"x_{i + 1}" for i in range(sys.n)]
              + [f"f_{i + 1}" for i in range(sys.m)]
              + [f"g_{i + 1}" for i in range(sys.p)]
              + [f"y_{i + 1}" for i in range(sys.p)])
    rows = []
    for k in range(traj.steps + 1):
        f = [fmt(v) for v in traj.f[k]] if k < traj.steps else [""] * sys.m
        rows.append([str(k)] + [fmt(v) for v in traj.x[k]] + f
                    + [fmt(v) for v in traj.g[k]] + [fmt(v) for v in traj.y[k]])
    write_csv(out, header, rows)
    meta = {
        "system": sys.name,
        "steps": traj.steps,
        "q": [float(v) for v in traj.q],
        "constraint_value": float(traj.constraint_value),
        "feasible": bool(traj.constraint_value <= 1.0),
        "f_amplitude": None if gens is None else gens.f_amplitude,
        "g_amplitude": None if gens is None else gens.g_amplitude,
    }
    write_json(sidecar_path(out), meta)
    return meta


def cmd_estimate(cfg: RunConfig, out: Path, steps_given: bool = False) -> dict:
    sys = cfg.system
    y, x, _ = measurements_for(cfg, steps_given)
    dirs = cfg.direction_list
    reports = observer.run(sys, y, dirs, cfg.tol)
    header = ["k"]
    if x is not None:
        header += [f"x_{i + 1}" for i in range(sys.n)]
    header += [f"xhat_{i + 1}" for i in range(sys.n)]
    if x is not None:
        header += [f"abs_err_{i + 1}" for i in range(sys.n)]
    header += [f"sigma_{j + 1}" for j in range(len(dirs))] + ["I", "rho", "beta"]
    rows = []
    for rep in reports:
        row = [str(rep.k)]
        if x is not None:
            row += [fmt(v) for v in x[rep.k]]
        row += [fmt(v) for v in rep.estimate]
        if x is not None:
            row += [fmt(v) for v in np.abs(x[rep.k] - rep.estimate)]
        row += [fmt(d.sigma) for d in rep.directional]
        row += [str(rep.causality_index), fmt(rep.rho), fmt(rep.beta)]
        rows.append(row)
    write_csv(out, header, rows)
    meta = {
        "system": sys.name,
        "steps": len(reports) - 1,
        "directions": [[float(v) for v in d] for d in dirs],
        "causality_index": [r.causality_index for r in reports],
    }
    write_json(sidecar_path(out), meta)
    return meta


def cmd_compare_kalman(cfg: RunConfig, out: Path, steps_given: bool = False) -> dict:
    sys = cfg.system
    y, _, q = measurements_for(cfg, steps_given)
    if q is None:
        q = np.zeros(sys.m)
    cmp = kalman.compare(sys, q, y, tol=cfg.tol)
    rows = [[str(k), fmt(d), fmt(e)]
            for k, (d, e) in enumerate(zip(cmp.deviations, cmp.identity_errors))]
    write_csv(out, ["k", "deviation", "identity_error"], rows)
    meta = {
        "system": sys.name,
        "steps": len(rows) - 1,
        "max_deviation": cmp.max_deviation,
        "max_identity_error": cmp.max_identity_error,
        "tolerance": 1e-8,
        "passed": bool(cmp.max_deviation <= 1e-8 and cmp.max_identity_error <= 1e-8),
    }
    write_json(sidecar_path(out), meta)
    return meta


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_residual: float
    tolerance: float


def run_checks(sys: model.DescriptorSystem, y: np.ndarray, directions: np.ndarray,
               tol: float = 0.0) -> tuple[list[CheckResult], list[dict]]:
    """Cross-check the observer against the batch oracle on every prefix of ``y``."""
    N = len(y) - 1
    states = list(observer.iterate(sys, y, tol))
    est_res = cost_res = norm_res = 0.0
    disagreements = 0
    table = []
    for k, st in enumerate(states):
        b = oracle.batch_estimate(sys, y[:k + 1])
        xo = observer.estimate(st)
        xb = st.q_pinv.project(b.xhat[-1])
        est_res = max(est_res, float(np.max(np.abs(xo - xb)))
                      / (1.0 + float(np.max(np.abs(b.xhat[-1])))))
        c = st.alpha - float(st.r @ st.q_pinv.pinv @ st.r)
        cost_res = max(cost_res, abs(c - b.cost) / max(1.0, abs(b.cost)))
        for j, l in enumerate(directions):
            member, norm_sq = oracle.range_membership(sys, k, l)
            obs = observer.in_range(st, l)
            disagreements += member != obs
            if member and obs:
                ql = float(l @ st.q_pinv.pinv @ l)
                norm_res = max(norm_res, abs(norm_sq - ql) / max(abs(ql), 1e-300))
            table.append({"k": k, "direction": j + 1, "oracle": bool(member),
                          "observer": bool(obs)})

    bs = oracle.build_block_system(sys, N)
    A = bs.weighted_design()
    sm = oracle.smooth_backward(sys, y, tol=tol)
    bt = oracle.batch_estimate(sys, y)
    diff = A @ (sm.xhat.ravel() - bt.xhat.ravel())
    smooth_res = float(np.linalg.norm(diff)) / (1.0 + float(np.linalg.norm(A @ bt.xhat.ravel())))
    smooth_res = max(smooth_res, abs(bs.cost(sm.xhat, y) - bt.cost) / max(1.0, bt.cost))

    last = states[-1]
    sup_res = 0.0
    sup_ok = True
    for l in directions:
        try:
            de = observer.directional_error(last, l)
            sp = oracle.support_function(sys, y, N, l)
            sm_ = oracle.support_function(sys, y, N, -l)
        except InfeasibleData:
            sup_ok, sup_res = False, math.inf
            break
        if not de.finite:
            sup_ok &= math.isinf(sp) and math.isinf(sm_)
            continue
        if math.isinf(sp) or math.isinf(sm_):
            sup_ok = False
            continue
        sup_res = max(sup_res,
                      abs(sp + sm_ - 2 * de.sigma) / (1.0 + abs(de.sigma)),
                      abs(sp - sm_ - 2 * de.estimate_component) / (1.0 + abs(de.estimate_component)))

    checks = [
        CheckResult("observer_vs_batch", est_res <= 1e-8, est_res, 1e-8),
        CheckResult("cost_identity", cost_res <= 1e-8, cost_res, 1e-8),
        CheckResult("smoother_vs_batch", smooth_res <= 1e-8, smooth_res, 1e-8),
        CheckResult("range_membership", disagreements == 0, float(disagreements), 0.0),
        CheckResult("norm_identity", norm_res <= 1e-6, norm_res, 1e-6),
        CheckResult("support_function", sup_ok and sup_res <= 1e-8, sup_res, 1e-8),
    ]
    return checks, table


def cmd_verify(cfg: RunConfig, out: Path, steps_given: bool = False) -> dict:
    sys = cfg.system
    y, _, _ = measurements_for(cfg, steps_given)
    if len(y) * sys.n > MAX_STACKED_DIM:
        raise DimensionMismatch(
            f"stacked dimension {len(y) * sys.n} exceeds {MAX_STACKED_DIM}; reduce --steps")
    checks, table = run_checks(sys, y, cfg.direction_list, cfg.tol)
    write_csv(out, ["check", "passed", "max_residual", "tolerance"],
              [[c.name, str(c.passed).lower(), fmt(c.max_residual), fmt(c.tolerance)]
               for c in checks])
    meta = {
        "system": sys.name,
        "steps": len(y) - 1,
        "all_passed": all(c.passed for c in checks),
        "membership": table,
    }
    write_json(sidecar_path(out), meta)
    return meta


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "compare-kalman": cmd_compare_kalman,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singulax",
                                 description="Minimax state estimation for descriptor systems")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--steps", type=int, help="horizon N (overrides config)")
        p.add_argument("--tol", type=float, help="relative rank tolerance (> 0)")
        p.add_argument("--seed", type=int, help="seed for randomized systems and noise")
        p.add_argument("--out", help="output CSV path (overrides config 'output')")
        if name != "simulate":
            p.add_argument("--measurements", help="CSV with y_1..y_p columns")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.tol is not None and args.tol <= 0:
            raise ConfigError("--tol must be positive")
        cfg = load_config(args.config, steps=args.steps, tol=args.tol, seed=args.seed,
                          measurements=getattr(args, "measurements", None), output=args.out)
        if not cfg.output:
            raise ConfigError(f"{args.config}: no output path; pass --out")
        out = Path(cfg.output)
        fn = COMMANDS[args.command]
        if args.command == "simulate":
            meta = fn(cfg, out)
        else:
            meta = fn(cfg, out, steps_given=args.steps is not None)
    except SingulaxError as e:
        step = getattr(e, "step", None)
        suffix = f" (step {step})" if step is not None and "step" not in str(e) else ""
        print(f"{e.code}: {e}{suffix}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"E_IO: {e}", file=sys.stderr)
        return 1

    summary = {k: _jsonable(v) for k, v in meta.items()
               if k not in ("membership", "causality_index", "directions")}
    print(f"{args.command}: wrote {out}")
    for k, v in sorted(summary.items()):
        print(f"  {k}: {v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
