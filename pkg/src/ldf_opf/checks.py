"""Invariant suite run by ``ldf-opf validate``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic_solver import solve, solve_opf
from .ldf import build_incidence, build_ldf
from .marginals import binding_set, fd_gradient_oracle, flow_marginal_costs, load_marginal_costs
from .netcase import NetworkCase, validate_case, validate_radial
from .opf_model import (
    check_dual_feasible,
    complementarity_residuals,
    dual_value,
    full_form_program,
    reduce,
)

__all__ = ["Check", "run_checks", "format_table"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _ok(name, value, limit, fmt="{:.3g}"):
    return Check(name, bool(value <= limit), f"{fmt.format(value)} <= {limit:g}")


def run_checks(case: NetworkCase, fd: bool = True, fd_limit: int | None = None) -> list[Check]:
    """Every check that applies to ``case``; stops early if the case itself is invalid."""
    out = []
    try:
        validate_case(case)
        topo = validate_radial(case)
    except ValueError as exc:
        return [Check("case", False, str(exc))]
    out.append(Check("case", True, f"radial, {topo.n} non-slack buses"))

    ldf = build_ldf(case, topo)
    _, A = build_incidence(topo)
    out.append(_ok("F vs inv(A)'", float(np.abs(ldf.F - np.linalg.inv(A).T).max()), 1e-12))

    ng_in = np.abs(ldf.F) @ ldf.A_g.T  # branch x generator membership
    nl_in = np.abs(ldf.F) @ ldf.A_l.T
    err = max(
        float(np.abs((ldf.r**2).sum(1) - ng_in.sum(1)).max(initial=0.0)),
        float(np.abs((ldf.s**2).sum(1) - nl_in.sum(1)).max(initial=0.0)),
        float(np.abs((ldf.t**2).sum(1) - nl_in.sum(1)).max(initial=0.0)),
    )
    out.append(_ok("path-count norms", err, 0.0))

    scale = max(1.0, float(np.abs(ldf.R).max()), float(np.abs(ldf.X).max()))
    eig = min(float(np.linalg.eigvalsh(ldf.R).min()), float(np.linalg.eigvalsh(ldf.X).min()))
    out.append(Check("R, X PSD", eig >= -1e-9 * scale, f"min eig {eig:.3g}"))

    try:
        red = reduce(case, topo, ldf)
    except ValueError as exc:
        out.append(Check("reduction", False, str(exc)))
        return out
    sol = solve_opf(red)
    if not sol.optimal:
        out.append(Check("solve", False, sol.status))
        return out
    J = sol.J
    full = solve(full_form_program(case, topo, ldf))
    if full.status != "optimal":
        out.append(Check("reduction equivalence", False, f"full form {full.status}"))
    else:
        out.append(_ok("reduction equivalence", abs(full.J - J) / (1 + abs(J)), 1e-6))

    out.append(_ok("duality gap", abs(J - dual_value(red, sol.dual)) / (1 + abs(J)), 1e-6))
    feas = check_dual_feasible(red, sol.dual)
    comp = complementarity_residuals(red, sol.dual, sol.p_g, sol.q_g)
    out.append(_ok("dual feasibility", max(feas.values()), 1e-6))
    out.append(_ok("complementarity", max(comp.values()), 1e-6))

    if fd:
        out.append(_fd_check(sol, fd_limit))
    return out


def _fd_check(sol, limit) -> Check:
    red = sol.reduced
    I, _ = binding_set(sol, warn=False)
    C_load, _ = load_marginal_costs(sol.dual, red, I)
    C_flow = flow_marginal_costs(sol.dual)
    coords = [(("load", i), C_load[i]) for i in range(2 * red.n_l)]
    coords += [(("flow", red.branches[k]), C_flow[k]) for k in red.bounded_branches]
    if limit is not None:
        coords = coords[:limit]
    worst, kinks = 0.0, 0
    for coord, closed in coords:
        res = fd_gradient_oracle(red, coord)
        if res.kink or res.one_sided:
            kinks += 1
            continue
        worst = max(worst, abs(res.value - closed) / max(1e-3, 1e-2 * abs(closed)))
    return Check(
        "FD vs closed form",
        worst <= 1.0,
        f"worst err/tol {worst:.3g} over {len(coords) - kinks} coords, {kinks} at kinks",
    )


def format_table(checks: list[Check]) -> str:
    w = max(len(c.name) for c in checks)
    return "\n".join(f"{c.name:<{w}}  {'PASS' if c.passed else 'FAIL'}  {c.detail}" for c in checks)
