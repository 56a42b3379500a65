"""Two-branch flow-limit sweep.

Pass 1 places distributed generators on a case, solves without flow limits
and freezes the limit of every branch feeding a generator bus (and of the
swept branches) at its setpoint flow. Pass 2 scales the limits of the two
swept branches over a grid and records how far the load prices at a watched
bus move from their uncongested values, next to the congestion bound.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conic_solver import OpfSolution, SolverOptions, solve_opf
from .marginals import MarginalReport, marginal_report, theorem1_check
from .netcase import (
    NetworkCase,
    augment_distributed_generation,
    load_case,
    set_flow_limits_from_solution,
)
from .opf_model import ReducedOpf, reduce_case

__all__ = ["SweepConfig", "SweepPoint", "SweepResult", "prepare", "run_sweep", "write_sweep_csv", "worker_count"]


@dataclass(frozen=True)
class SweepConfig:
    case: str = "case141"
    seed: int = 0
    dg_count: int = 25
    dg_p_max: float = 0.0654
    dg_q_mag: float = 0.0270
    dg_cost_range: tuple[float, float] = (0.0, 1.0)
    branches: tuple[int, ...] = (16, 18)
    start: float = 1.0
    end: float = 0.75
    steps: int = 20
    watch_bus: int = 20
    grid: str = "full"
    out_dir: str | None = None
    # the bound check allows 1e-9 of slack, so duals must be tighter than the solver default
    tol: float = 1e-10

    def __post_init__(self):
        if not (0 < self.end <= self.start <= 1):
            raise ValueError("scale grid needs 0 < end <= start <= 1")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.grid not in ("full", "diagonal"):
            raise ValueError("grid is 'full' or 'diagonal'")
        if not 1 <= len(self.branches) <= 2:
            raise ValueError("sweep one or two branches")

    def scales(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.start])
        return np.linspace(self.start, self.end, self.steps)

    def grid_points(self) -> list[tuple[float, ...]]:
        s = self.scales()
        if len(self.branches) == 1:
            return [(a,) for a in s]
        if self.grid == "diagonal":
            return [(a, a) for a in s]
        return [(a, b) for a in s for b in s]


@dataclass(frozen=True)
class SweepPoint:
    scales: tuple[float, ...]
    status: str
    dC_real: float = math.nan
    dC_reactive: float = math.nan
    bound: float = math.nan
    holds: bool = False
    holds_watch: bool = False
    binding: frozenset = frozenset()
    K: float = math.nan
    J: float = math.nan
    max_lhs: float = math.nan
    degenerate: bool = False


@dataclass
class SweepResult:
    config: SweepConfig
    case: NetworkCase
    reduced: ReducedOpf
    frozen: tuple[int, ...]
    baseline: OpfSolution
    baseline_report: MarginalReport
    points: list[SweepPoint] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(p.holds for p in self.points if p.status == "optimal")


def worker_count() -> int:
    """Pool size: ``LDF_OPF_THREADS`` if set, else the CPU count."""
    cap = os.environ.get("LDF_OPF_THREADS")
    if cap:
        return max(1, int(cap))
    return os.cpu_count() or 1


def prepare(config: SweepConfig, case: NetworkCase | None = None):
    """Pass 1: the augmented case with frozen limits and its uncongested solve."""
    case = case if case is not None else load_case(config.case)
    watch = case.bus(config.watch_bus)
    if watch.kind != "load":
        raise ValueError(f"watch bus {config.watch_bus} is not a load bus")
    case = augment_distributed_generation(
        case, config.dg_count, config.dg_p_max, config.dg_q_mag, config.dg_cost_range, config.seed,
        exclude=(config.watch_bus,),
    )
    topo, _, red = reduce_case(case)
    free = solve_opf(red.with_params(f_max=np.full(red.n_branches, np.inf)), SolverOptions(tol=config.tol))
    if not free.optimal:
        raise ValueError(f"uncongested solve ended {free.status}")
    fp, fq = free.flows()
    flows = {bid: (fp[k], fq[k]) for k, bid in enumerate(red.branches)}
    feeding = {topo.branch_of_bus[g] for g in red.gen_buses}
    frozen = tuple(sorted(feeding | set(config.branches)))
    case = set_flow_limits_from_solution(case, flows, frozen)
    _, _, red = reduce_case(case)
    return case, red, frozen, free


def _solve_point(red: ReducedOpf, config: SweepConfig, scales, base_report: MarginalReport, free: OpfSolution):
    f = red.f_max.copy()
    for bid, a in zip(config.branches, scales):
        f[red.branch_index(bid)] *= a
    sol = solve_opf(red.with_params(f_max=f), SolverOptions(tol=config.tol))
    if not sol.optimal:
        return SweepPoint(tuple(scales), sol.status)
    rep = marginal_report(sol, free)
    chk = theorem1_check(rep, base_report)
    i = red.load_buses.index(config.watch_bus)
    dr, dq = float(chk.lhs_real[i]), float(chk.lhs_reactive[i])
    return SweepPoint(
        scales=tuple(float(a) for a in scales),
        status=sol.status,
        dC_real=dr,
        dC_reactive=dq,
        bound=chk.rhs,
        holds=chk.holds,
        holds_watch=max(dr, dq) <= chk.rhs + 1e-9,
        binding=rep.binding_set,
        K=rep.K,
        J=sol.J,
        max_lhs=float(max(chk.lhs_real.max(initial=0.0), chk.lhs_reactive.max(initial=0.0))),
        degenerate=rep.degenerate,
    )


def run_sweep(config: SweepConfig, case: NetworkCase | None = None, workers: int | None = None) -> SweepResult:
    case, red, frozen, free = prepare(config, case)
    base_report = marginal_report(free, free)
    pts = config.grid_points()
    workers = workers or worker_count()
    if workers > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(pts))) as pool:
            out = list(pool.map(lambda s: _solve_point(red, config, s, base_report, free), pts))
    else:
        out = [_solve_point(red, config, s, base_report, free) for s in pts]
    return SweepResult(config, case, red, frozen, free, base_report, out)


def _g(x) -> str:
    return f"{x + 0.0:.12g}"


def write_sweep_csv(path, result: SweepResult) -> None:
    two = len(result.config.branches) == 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# ldf-opf v1"])
        w.writerow(["scale_b1", "scale_b2", "dC_real", "dC_reactive", "bound", "holds", "status", "binding"])
        for p in result.points:
            w.writerow(
                [_g(p.scales[0]), _g(p.scales[1]) if two else "", _g(p.dC_real), _g(p.dC_reactive),
                 _g(p.bound), int(p.holds), p.status, " ".join(str(b) for b in sorted(p.binding))]
            )
