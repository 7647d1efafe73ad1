"""Hourly PV-versus-grid economic dispatch.

The hours are coupled only through the objective, and each hour's feasible
set is the interval ``0 <= p_pv <= min(load, pv_max)`` with the grid covering
the remainder, so the optimum is a per-hour closed form. ``validate_dispatch``
checks any schedule against an exhaustive per-hour search.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .plots import stacked_area_svg, write_svg

log = logging.getLogger(__name__)

DEFAULT_COST_GRID = 1.0
DEFAULT_COST_PV = 0.4


def _vector(name, v, horizon=None) -> np.ndarray:
    if np.ndim(v) == 0 and horizon is not None:
        v = np.full(horizon, v)
    a = np.array(v, dtype=np.float64).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(a < 0):
        raise ValueError(f"{name} has negative entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DispatchProblem:
    """Demand and PV availability in kW per hour, prices in $/kWh.

    Scalars for ``load`` or ``pv_max`` are broadcast over ``horizon`` hours.
    """

    load: np.ndarray
    pv_max: np.ndarray
    cost_grid: float = DEFAULT_COST_GRID
    cost_pv: float = DEFAULT_COST_PV
    horizon: int = field(default=None)

    def __post_init__(self):
        h = self.horizon
        load = _vector("load", self.load, h or (24 if np.ndim(self.load) == 0 else None))
        pv = _vector("pv_max", self.pv_max, load.size)
        if load.size != pv.size:
            raise ValueError("load and pv_max differ in length")
        if h is not None and h != load.size:
            raise ValueError("horizon does not match the profiles")
        for name in ("cost_grid", "cost_pv"):
            c = float(getattr(self, name))
            if not np.isfinite(c) or c < 0:
                raise ValueError(f"{name} must be a non-negative number")
            object.__setattr__(self, name, c)
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "pv_max", pv)
        object.__setattr__(self, "horizon", load.size)

    def cost(self, p_grid, p_pv) -> float:
        return float(self.cost_grid * np.sum(p_grid) + self.cost_pv * np.sum(p_pv))

    def hour(self, t: int) -> "DispatchProblem":
        return DispatchProblem(self.load[t : t + 1], self.pv_max[t : t + 1], self.cost_grid, self.cost_pv)


@dataclass(frozen=True, eq=False)
class DispatchSolution:
    p_grid: np.ndarray
    p_pv: np.ndarray
    total_cost: float

    @property
    def energy(self) -> dict:
        return {"grid_kwh": float(self.p_grid.sum()), "pv_kwh": float(self.p_pv.sum())}


def clamp_load(load) -> np.ndarray:
    """Zero out negative forecast values, logging how many were touched."""
    a = np.asarray(load, dtype=np.float64).copy()
    neg = a < 0
    if neg.any():
        log.warning("clamping %d negative load value(s) to 0 (min %.4g)", int(neg.sum()), float(a.min()))
        a[neg] = 0.0
    return a


def solve_dispatch(problem: DispatchProblem) -> DispatchSolution:
    """Cheapest schedule. PV is preferred when it costs no more than the grid."""
    if problem.cost_pv <= problem.cost_grid:
        p_pv = np.minimum(problem.load, problem.pv_max)
    else:
        p_pv = np.zeros(problem.horizon)
    p_grid = problem.load - p_pv
    return DispatchSolution(p_grid, p_pv, problem.cost(p_grid, p_pv))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class DispatchVerdict:
    feasible: bool
    optimal: bool
    balance_residual: np.ndarray
    bound_residual: np.ndarray
    cost: float
    reference_cost: float
    cost_gap: float
    tolerance: float

    @property
    def max_residual(self) -> float:
        return float(max(self.balance_residual.max(initial=0.0), self.bound_residual.max(initial=0.0)))


def reference_cost(problem: DispatchProblem, steps: int = 10_000) -> float:
    """Exhaustive search: every hour tries p_pv on the lattice
    ``{0, pv_max/steps, ..., pv_max}`` restricted to ``p_pv <= load``."""
    frac = np.arange(steps + 1) / steps
    total = 0.0
    for t0 in range(0, problem.horizon, 64):
        load = problem.load[t0 : t0 + 64, None]
        p_pv = problem.pv_max[t0 : t0 + 64, None] * frac[None, :]
        costs = problem.cost_grid * (load - p_pv) + problem.cost_pv * p_pv
        costs = np.where(p_pv <= load, costs, np.inf)  # the grid cannot export
        total += float(costs.min(axis=1).sum())
    return total


def validate_dispatch(problem: DispatchProblem, solution: DispatchSolution, tol: float = 1e-9, steps: int = 10_000) -> DispatchVerdict:
    """Residuals per hour and an optimality check against exhaustive search.

    The lattice step is ``pv_max / steps`` per hour; the schedule counts as
    optimal when its cost is within ``cost_grid * step * T`` of the search.
    """
    p_grid = np.asarray(solution.p_grid, dtype=np.float64).ravel()
    p_pv = np.asarray(solution.p_pv, dtype=np.float64).ravel()
    if p_grid.size != problem.horizon or p_pv.size != problem.horizon:
        raise ValueError(f"schedule covers {p_grid.size}/{p_pv.size} hours, problem has {problem.horizon}")
    balance = np.abs(p_grid + p_pv - problem.load)
    bounds = np.maximum.reduce([np.zeros_like(p_pv), -p_grid, -p_pv, p_pv - problem.pv_max])
    feasible = bool(balance.max(initial=0.0) <= tol and bounds.max(initial=0.0) <= tol)
    cost = problem.cost(p_grid, p_pv)
    ref = reference_cost(problem, steps)
    delta = float(problem.pv_max.max(initial=0.0)) / steps
    allowed = problem.cost_grid * delta * problem.horizon + tol
    gap = cost - ref
    return DispatchVerdict(feasible, feasible and gap <= allowed, balance, bounds, cost, ref, gap, allowed)


# ---------------------------------------------------------------- I/O


def read_problem_csv(path, cost_grid: float = DEFAULT_COST_GRID, cost_pv: float = DEFAULT_COST_PV, clamp: bool = True) -> DispatchProblem:
    """CSV with columns ``hour, load_kw, pv_max_kw``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"hour", "load_kw", "pv_max_kw"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns hour, load_kw, pv_max_kw")
    rows.sort(key=lambda r: int(r["hour"]))
    load = np.array([float(r["load_kw"]) for r in rows])
    return DispatchProblem(clamp_load(load) if clamp else load, [float(r["pv_max_kw"]) for r in rows], cost_grid, cost_pv)


def write_dispatch(problem: DispatchProblem, solution: DispatchSolution, directory, stem: str = "dispatch") -> list[Path]:
    """Schedule CSV, JSON summary and a stacked-area SVG."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    sched = out / f"{stem}_schedule.csv"
    with sched.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "load_kw", "pv_max_kw", "p_grid_kw", "p_pv_kw"])
        for t in range(problem.horizon):
            w.writerow([t, repr(float(problem.load[t])), repr(float(problem.pv_max[t])), repr(float(solution.p_grid[t])), repr(float(solution.p_pv[t]))])
    summary = out / f"{stem}_summary.json"
    doc = {
        "horizon": problem.horizon,
        "cost_grid": problem.cost_grid,
        "cost_pv": problem.cost_pv,
        "total_cost": solution.total_cost,
        **solution.energy,
    }
    summary.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    svg = stacked_area_svg(
        np.arange(problem.horizon),
        [("grid", solution.p_grid), ("PV", solution.p_pv)],
        title="Dispatch schedule",
        xlabel="hour",
        ylabel="power (kW)",
    )
    return [sched, summary, write_svg(out / f"{stem}.svg", svg)]
