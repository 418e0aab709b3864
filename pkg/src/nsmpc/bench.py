"""Problem generators, closed-loop simulation, timing sweeps and performance profiles."""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .ipm import NullSpaceSolver, SolverOptions
from .problem import MpcProblem, bound_constraints, objective_value
from .reference import ClassicalSolver

SOLVERS = {"nullspace": NullSpaceSolver, "classical": ClassicalSolver}
X_MAX, U_MAX = 4.0, 0.5

SWEEP_COLUMNS = ["family", "n_x", "n_u", "T", "solver", "status", "iters",
                 "time_per_iter_us", "total_us", "setup_us", "factorizations_per_iter"]


@dataclass
class BenchConfig:
    family: str = "random"
    n_x: int = 12
    n_u: int = 3
    T: int = 30
    n_steps: int = 50
    seed: int = 0
    solver: str = "nullspace"
    dt: float = 0.5
    out: Optional[str] = None
    format: str = "csv"


def make_solver(prob: MpcProblem, name: str = "nullspace", opts: SolverOptions = SolverOptions()):
    try:
        cls = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return cls(prob, opts)


def spectral_radius(A) -> float:
    return float(np.abs(np.linalg.eigvals(A)).max())


def gen_random_system(n_x: int, n_u: int, seed: int = 0, T: int = 30,
                      x0_value: float = 0.2) -> MpcProblem:
    """Random dense neutrally stable plant with box bounds on states and controls."""
    if n_u > n_x:
        raise ValueError(f"n_u={n_u} exceeds n_x={n_x}")
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (n_x, n_x))
    A /= spectral_radius(A)
    B = rng.uniform(-1.0, 1.0, (n_x, n_u))
    A_xi, B_ui, b = bound_constraints(n_x, n_u, X_MAX, U_MAX)
    return MpcProblem(A_xe=A, B_ue=B, Q=np.eye(n_x), U_ctl=np.eye(n_u), T=T,
                      x0=np.full(n_x, x0_value), A_xi=A_xi, B_ui=B_ui, b_xui=b)


def mass_spring_dynamics(M: int, n_u: int, dt: float = 0.5):
    """Zero-order-hold discretisation of a chain of unit masses and unit springs.

    The chain is anchored to walls at both ends; forces act on the first
    ``n_u`` masses.  States are ``[positions, velocities]``.
    """
    K = 2.0 * np.eye(M) - np.eye(M, k=1) - np.eye(M, k=-1)
    Ac = np.block([[np.zeros((M, M)), np.eye(M)], [-K, np.zeros((M, M))]])
    Bc = np.vstack([np.zeros((M, n_u)), np.eye(M)[:, :n_u]])
    n = 2 * M
    E = expm(np.block([[Ac, Bc], [np.zeros((n_u, n + n_u))]]) * dt)
    return E[:n, :n], E[:n, n:]


def gen_mass_spring(M: int = 6, n_u: int = 3, seed: int = 0, T: int = 30,
                    dt: float = 0.5, x0_value: float = 1.0) -> MpcProblem:
    """Mass-spring chain with ``n_x = 2 M``; ``seed`` is accepted for a uniform interface."""
    if M < 2 or not 1 <= n_u <= M:
        raise ValueError(f"need M >= 2 and 1 <= n_u <= M, got M={M}, n_u={n_u}")
    A, B = mass_spring_dynamics(M, n_u, dt)
    n_x = 2 * M
    A_xi, B_ui, b = bound_constraints(n_x, n_u, X_MAX, U_MAX)
    return MpcProblem(A_xe=A, B_ue=B, Q=np.eye(n_x), U_ctl=np.eye(n_u), T=T,
                      x0=np.full(n_x, x0_value), A_xi=A_xi, B_ui=B_ui, b_xui=b)


def generate(family: str, n_x: int, n_u: int, T: int, seed: int = 0, dt: float = 0.5,
             path: Optional[str] = None) -> MpcProblem:
    if family == "random":
        return gen_random_system(n_x, n_u, seed, T)
    if family == "mass-spring":
        if n_x % 2:
            raise ValueError("mass-spring needs an even n_x")
        return gen_mass_spring(n_x // 2, n_u, seed, T, dt)
    if family == "file":
        if path is None:
            raise ValueError("family 'file' needs a problem path")
        return MpcProblem.load(path)
    raise ValueError(f"unknown family {family!r}")


def closed_loop(prob: MpcProblem, solver="nullspace", n_steps: int = 50,
                opts: SolverOptions = SolverOptions()) -> List[dict]:
    """Receding-horizon simulation applying the first original control of each solve.

    Stops early (returning the partial log) when a solve does not converge.
    """
    if isinstance(solver, str):
        solver = make_solver(prob, solver, opts)
    x = prob.x0.copy()
    rows = []
    for step in range(n_steps):
        res = solver.solve(x)
        qp = solver.qp_for(x)
        u = res.u0.copy()
        U_all = qp.split(res.y)[0]
        rows.append({
            "step": step, "status": res.status.value, "iters": res.iterations,
            "J": objective_value(qp, res.y), "solve_us": res.solve_time * 1e6,
            "time_per_iter_us": res.time_per_iter * 1e6,
            "max_ustar": float(np.abs(U_all[:, qp.n_u:]).max(initial=0.0)),
            "x": x.tolist(), "u": u.tolist(),
        })
        if not res.converged:
            break
        x = prob.step(x, u)
    return rows


def _time_solver(solver, repeats: int):
    results = [solver.solve() for _ in range(repeats)]
    last = results[-1]
    per_iter = statistics.median(r.time_per_iter for r in results)
    total = statistics.median(r.solve_time for r in results)
    return last, per_iter, total


def timing_sweep(axis: str, grid: Sequence[int], n_x: int = 12, n_u: int = 3, T: int = 30,
                 solvers: Iterable[str] = ("nullspace", "classical"), family: str = "random",
                 seed: int = 0, repeats: int = 5,
                 opts: SolverOptions = SolverOptions()) -> List[dict]:
    """Median-of-``repeats`` time per Newton iteration over a one-dimensional grid."""
    if axis not in ("n_u", "T", "n_x"):
        raise ValueError(f"axis must be one of n_u, T, n_x; got {axis!r}")
    if not grid:
        raise ValueError("grid must be nonempty")
    rows = []
    for value in grid:
        dims = {"n_x": n_x, "n_u": n_u, "T": T, axis: int(value)}
        for name in solvers:
            row = {"family": family, **dims, "solver": name}
            try:
                prob = generate(family, dims["n_x"], dims["n_u"], dims["T"], seed)
                solver = make_solver(prob, name, opts)
                res, per_iter, total = _time_solver(solver, repeats)
                facts = res.factorizations
                row.update(status=res.status.value, iters=res.iterations,
                           time_per_iter_us=per_iter * 1e6, total_us=total * 1e6,
                           setup_us=solver.setup_time * 1e6,
                           factorizations_per_iter=(sum(facts) / len(facts)) if facts else 0)
            except Exception as err:  # recorded, sweep continues
                row.update(status=f"error: {err}", iters=0, time_per_iter_us=float("nan"),
                           total_us=float("nan"), setup_us=float("nan"),
                           factorizations_per_iter=0)
            rows.append(row)
    return rows


def perf_profile(rows: Iterable[dict], cost: str = "time_per_iter_us") -> List[dict]:
    """Dolan-More performance profile points ``(solver, ratio, fraction)``.

    Problems are keyed by ``(family, n_x, n_u, T)``.  Every solver must cover
    the same problem set.  Failed runs count as never solved.
    """
    table: Dict[str, Dict[tuple, float]] = {}
    for r in rows:
        key = (r["family"], int(r["n_x"]), int(r["n_u"]), int(r["T"]))
        ok = str(r.get("status", "Converged")) == "Converged"
        val = float(r[cost]) if ok else np.inf
        table.setdefault(r["solver"], {})[key] = val
    if not table:
        raise ValueError("no rows")
    solvers = sorted(table)
    problems = set(table[solvers[0]])
    for s in solvers[1:]:
        diff = problems.symmetric_difference(table[s])
        if diff:
            raise ValueError(f"solvers {solvers[0]} and {s} differ on problems {sorted(diff)}")
    problems = sorted(problems)
    best = {p: min(table[s][p] for s in solvers) for p in problems}
    out = []
    for s in solvers:
        ratios = np.array([table[s][p] / best[p] if np.isfinite(best[p]) else np.inf
                           for p in problems])
        finite = np.sort(ratios[np.isfinite(ratios)])
        for tau in np.unique(finite):
            out.append({"solver": s, "ratio": float(tau),
                        "fraction": float(np.mean(ratios <= tau))})
    return out


def rows_to_csv(rows: List[dict], columns: Optional[Sequence[str]] = None) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    return buf.getvalue()


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


