"""Marginal prices read off an OPF dual.

``C_flow`` is the sensitivity of the optimal cost to each flow limit and
``C_load`` its gradient in the load vector ``[p_l; q_l]`` (injection
convention: a demand enters with a minus sign). Both are taken with
respect to the reduced objective ``c_tilde' p_g``; the constant slack term
``-c_s * sum(p_l)`` contributes a further ``-c_s`` to each real coordinate
of the full cost gradient and is left out here.

Congestion moves ``C_load`` away from its uncongested value by at most
``K * sum(|C_flow|)`` over the binding set, which :func:`theorem1_check`
verifies for a pair of solves.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conic_solver import OpfSolution, SolverOptions, solve_opf
from .opf_model import DualSolution, ReducedOpf

__all__ = [
    "DegeneracyWarning",
    "MarginalReport",
    "BoundCheck",
    "FdResult",
    "binding_set",
    "flow_marginal_costs",
    "load_marginal_costs",
    "bound_constant",
    "marginal_report",
    "theorem1_check",
    "fd_gradient_oracle",
    "write_marginals_csv",
]


class DegeneracyWarning(UserWarning):
    """Primal activity and multiplier disagree on whether a limit binds."""


@dataclass(frozen=True)
class MarginalReport:
    branches: tuple[int, ...]
    load_buses: tuple[int, ...]
    C_flow: np.ndarray
    C_load: np.ndarray
    baseline: np.ndarray
    binding_set: frozenset
    K: float
    bound_value: float
    flow: np.ndarray
    limit: np.ndarray
    degeneracy_flags: dict = field(default_factory=dict)

    @property
    def delta(self) -> np.ndarray:
        return np.abs(self.C_load - self.baseline)

    @property
    def degenerate(self) -> bool:
        return bool(self.degeneracy_flags)


@dataclass(frozen=True)
class BoundCheck:
    lhs_real: np.ndarray
    lhs_reactive: np.ndarray
    rhs: float
    holds: bool


@dataclass(frozen=True)
class FdResult:
    value: float
    forward: float | None
    backward: float | None
    one_sided: str | None = None
    kink: bool = False


def _active(gap, bound, tol):
    return gap <= tol * max(1.0, abs(bound))


def binding_set(solution: OpfSolution, tol: float = 1e-6, dual_tol: float = 1e-6, warn: bool = True):
    """Branch ids whose flow limit binds, plus per-branch disagreement notes.

    A branch is binding if its flow is within ``tol * max(1, f_max)`` of the
    limit or its multiplier exceeds ``dual_tol``. The second return value
    maps branch ids to ``"active-without-multiplier"`` or
    ``"multiplier-without-activity"`` where the two tests disagree.
    """
    red = solution.reduced
    if not solution.optimal:
        raise ValueError(f"binding set of a {solution.status} solve")
    fp, fq = solution.flows()
    mu = solution.dual.mu
    out, notes = set(), {}
    for k in red.bounded_branches:
        fmax = red.f_max[k]
        primal = _active(fmax - math.hypot(fp[k], fq[k]), fmax, tol)
        dual = mu[k] > dual_tol
        bid = red.branches[k]
        if primal or dual:
            out.add(bid)
        if primal and not dual:
            notes[bid] = "active-without-multiplier"
        elif dual and not primal:
            notes[bid] = "multiplier-without-activity"
    if notes and warn:
        warnings.warn(f"binding tests disagree on branches {sorted(notes)}", DegeneracyWarning, stacklevel=2)
    return frozenset(out), notes


def flow_marginal_costs(dual: DualSolution) -> np.ndarray:
    return -np.asarray(dual.mu, dtype=float).copy()


def load_marginal_costs(dual: DualSolution, reduced: ReducedOpf, I=None):
    """``(C_load, baseline)`` where ``baseline = -G' lam`` and ``C_load`` adds the
    cone terms of the branches in ``I`` (all bounded branches when ``I`` is None)."""
    base = -(reduced.G.T @ dual.lam) if reduced.m else np.zeros(2 * reduced.n_l)
    ks = reduced.bounded_branches if I is None else [reduced.branch_index(j) for j in I]
    cl = base.copy()
    for k in ks:
        cl -= dual.theta[k] * reduced.s[k] + dual.phi[k] * reduced.t[k]
    return cl, base


def bound_constant(reduced, I) -> float:
    """``max over j in I of sqrt(nnz(s_j)) * ||[s_j; t_j]||``.

    Accepts anything carrying ``branches``, ``s`` and ``t`` (a reduced OPF or
    an :class:`~ldf_opf.ldf.LdfModel`).
    """
    I = list(I)
    if not I:
        raise ValueError("bound constant needs a nonempty binding set")
    idx = {b: k for k, b in enumerate(reduced.branches)}
    best = 0.0
    for j in I:
        k = idx[j]
        nnz = np.count_nonzero(reduced.s[k])
        best = max(best, math.sqrt(nnz) * float(np.linalg.norm(np.concatenate([reduced.s[k], reduced.t[k]]))))
    return best


def _flags(solution: OpfSolution, tol: float, dual_tol: float, branch_notes: dict) -> dict:
    """Constraints that are active with a vanishing multiplier, or the reverse."""
    red, d = solution.reduced, solution.dual
    flags = {("branch", b): why for b, why in branch_notes.items()}
    if red.m:
        gap = red.G @ red.ell + red.h - red.M_p @ solution.p_g - red.M_q @ solution.q_g
        for i, label in enumerate(red.row_labels):
            if _active(gap[i], red.h[i], tol) and d.lam[i] <= dual_tol:
                flags[("row", label)] = "active-without-multiplier"
    for name, mult, gap, bound in (
        ("p_max", d.alpha_ub, red.p_max - solution.p_g, red.p_max),
        ("p_min", d.alpha_lb, solution.p_g - red.p_min, red.p_min),
        ("q_max", d.beta_ub, red.q_max - solution.q_g, red.q_max),
        ("q_min", d.beta_lb, solution.q_g - red.q_min, red.q_min),
    ):
        for g in np.flatnonzero(np.isfinite(bound)):
            if _active(gap[g], bound[g], tol) and mult[g] <= dual_tol:
                flags[(name, red.gen_buses[g])] = "active-without-multiplier"
    return flags


def marginal_report(
    solution: OpfSolution,
    uncongested: OpfSolution | None = None,
    tol: float = 1e-6,
    dual_tol: float = 1e-6,
    opts: SolverOptions | None = None,
) -> MarginalReport:
    """Prices at ``solution`` against the baseline of an uncongested solve.

    Without ``uncongested`` the baseline comes from re-solving with every
    flow limit removed.
    """
    if not solution.optimal:
        raise ValueError(f"marginal report of a {solution.status} solve")
    red = solution.reduced
    I, notes = binding_set(solution, tol, dual_tol, warn=False)
    C_load, _ = load_marginal_costs(solution.dual, red, I)
    if uncongested is None:
        uncongested = solve_opf(red.with_params(f_max=np.full(red.n_branches, np.inf)), opts)
    if not uncongested.optimal:
        raise ValueError(f"uncongested solve ended {uncongested.status}")
    _, baseline = load_marginal_costs(uncongested.dual, uncongested.reduced, ())
    C_flow = flow_marginal_costs(solution.dual)
    K = bound_constant(red, I) if I else 0.0
    bound = K * sum(abs(C_flow[red.branch_index(j)]) for j in I)
    fp, fq = solution.flows()
    return MarginalReport(
        branches=red.branches,
        load_buses=red.load_buses,
        C_flow=C_flow,
        C_load=C_load,
        baseline=baseline,
        binding_set=I,
        K=K,
        bound_value=float(bound),
        flow=np.hypot(fp, fq),
        limit=red.f_max.copy(),
        degeneracy_flags=_flags(solution, tol, dual_tol, notes),
    )


def theorem1_check(congested: MarginalReport, uncongested: MarginalReport, slack: float = 1e-9) -> BoundCheck:
    """Compare ``|C_load(congested) - C_load(uncongested)|`` with the bound of ``congested``."""
    if uncongested.binding_set:
        raise ValueError(f"reference solve has binding branches {sorted(uncongested.binding_set)}")
    if congested.C_load.shape != uncongested.C_load.shape:
        raise ValueError("reports come from different load partitions")
    lhs = np.abs(congested.C_load - uncongested.C_load)
    n_l = len(congested.load_buses)
    rhs = congested.bound_value
    return BoundCheck(lhs[:n_l], lhs[n_l:], rhs, bool(np.all(lhs <= rhs + slack)))


def _perturbed(reduced: ReducedOpf, coordinate, step: float):
    kind, key = coordinate
    if kind == "load":
        ell = reduced.ell.copy()
        ell[key] += step
        return reduced.with_params(ell=ell)
    if kind == "flow":
        f = reduced.f_max.copy()
        f[reduced.branch_index(key)] += step
        return reduced.with_params(f_max=f)
    raise ValueError(f"unknown coordinate kind {kind!r}")


def fd_gradient_oracle(
    reduced: ReducedOpf,
    coordinate,
    delta: float = 1e-4,
    opts: SolverOptions | None = None,
    kink_tol: float = 1e-3,
) -> FdResult:
    """Central difference of the optimal ``c_tilde' p_g`` in one parameter.

    ``coordinate`` is ``("load", i)`` for entry ``i`` of the load vector or
    ``("flow", branch_id)`` for a flow limit. When a side is infeasible the
    other one-sided difference is returned and ``one_sided`` names the side
    used. ``kink`` marks forward and backward slopes that disagree by more
    than ``max(kink_tol, 1e-2 * |slope|)``.
    """
    if coordinate[0] == "flow" and not np.isfinite(reduced.f_max[reduced.branch_index(coordinate[1])]):
        return FdResult(0.0, 0.0, 0.0)
    centre = solve_opf(reduced, opts)
    if not centre.optimal:
        raise ValueError(f"unperturbed problem is {centre.status}")
    j0 = centre.reduced_value
    up = solve_opf(_perturbed(reduced, coordinate, delta), opts)
    dn = solve_opf(_perturbed(reduced, coordinate, -delta), opts)
    fwd = (up.reduced_value - j0) / delta if up.optimal else None
    bwd = (j0 - dn.reduced_value) / delta if dn.optimal else None
    if fwd is None and bwd is None:
        raise ValueError("both perturbed problems are infeasible")
    if fwd is None:
        return FdResult(bwd, None, bwd, one_sided="backward")
    if bwd is None:
        return FdResult(fwd, fwd, None, one_sided="forward")
    central = (up.reduced_value - dn.reduced_value) / (2 * delta)
    kink = abs(fwd - bwd) > max(kink_tol, 1e-2 * abs(central))
    return FdResult(central, fwd, bwd, kink=kink)


def _g(x) -> str:
    return f"{x + 0.0:.12g}"


def write_marginals_csv(path, report: MarginalReport) -> None:
    """One row per load coordinate, then one per branch."""
    n_l = len(report.load_buses)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# ldf-opf v1"])
        w.writerow(["kind", "id", "axis", "C_load", "baseline", "abs_delta", "bound"])
        for i in range(2 * n_l):
            axis = "real" if i < n_l else "reactive"
            w.writerow(
                ["load", report.load_buses[i % n_l], axis, _g(report.C_load[i]), _g(report.baseline[i]),
                 _g(report.delta[i]), _g(report.bound_value)]
            )
        w.writerow(["kind", "id", "flow", "limit", "binding", "C_flow"])
        for k, bid in enumerate(report.branches):
            w.writerow(
                ["branch", bid, _g(report.flow[k]), _g(report.limit[k]),
                 int(bid in report.binding_set), _g(report.C_flow[k])]
            )
