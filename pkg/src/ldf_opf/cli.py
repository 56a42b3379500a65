"""``ldf-opf`` command line: solve, sweep, validate."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from pathlib import Path

from .checks import Check, format_table, run_checks
from .conic_solver import PRIMAL_INFEASIBLE, solve_opf
from .marginals import marginal_report, write_marginals_csv
from .netcase import NetworkCase, load_case, random_radial_case
from .opf_model import reduce_case
from .sweep import SweepConfig, run_sweep, write_sweep_csv

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_INVALID = 0, 1, 2, 3
HEADER = ["# ldf-opf v1"]


def _g(x) -> str:
    return f"{x + 0.0:.12g}"


def _writer(fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    return w


def with_flow_limits(case: NetworkCase, limits: dict[int, float]) -> NetworkCase:
    known = {br.id for br in case.branches}
    bad = sorted(set(limits) - known)
    if bad:
        raise ValueError(f"unknown branch ids: {bad}")
    return case.replace(
        branches=tuple(
            dataclasses.replace(br, f_max=limits[br.id]) if br.id in limits else br for br in case.branches
        )
    )


def write_solution(out: Path, case: NetworkCase, topo, ldf, sol) -> None:
    """``solution.csv``, ``duals.csv`` and ``marginals.csv`` for an optimal solve."""
    red = sol.reduced
    p, q = ldf.injections(sol.p_g, sol.q_g, red.ell)
    v = ldf.voltages(p, q)
    fp, fq = sol.flows()
    with open(out / "solution.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["kind", "id", "p", "q"])
        for g, bus in enumerate(red.gen_buses):
            w.writerow(["generator", bus, _g(sol.p_g[g]), _g(sol.q_g[g])])
        w.writerow(["slack", case.slack.bus, _g(-p.sum()), _g(-q.sum())])
        w.writerow(["kind", "id", "v", "v_mag"])
        w.writerow(["bus", case.slack.bus, _g(ldf.v0), _g(math.sqrt(ldf.v0))])
        for k, bus in enumerate(ldf.buses):
            w.writerow(["bus", bus, _g(v[k]), _g(math.sqrt(max(v[k], 0.0)))])
        w.writerow(["kind", "id", "f_p", "f_q", "limit"])
        for k, bid in enumerate(red.branches):
            w.writerow(["branch", bid, _g(fp[k]), _g(fq[k]), _g(red.f_max[k])])
    d = sol.dual
    with open(out / "duals.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["name", "constraint", "id", "value"])
        for i, (kind, bus) in enumerate(red.row_labels):
            w.writerow(["lambda", kind, bus, _g(d.lam[i])])
        for name, vals in (("alpha_lb", d.alpha_lb), ("alpha_ub", d.alpha_ub), ("beta_lb", d.beta_lb), ("beta_ub", d.beta_ub)):
            for g, bus in enumerate(red.gen_buses):
                w.writerow([name, "generator", bus, _g(vals[g])])
        for k in red.bounded_branches:
            bid = red.branches[k]
            for name, vals in (("mu", d.mu), ("theta", d.theta), ("phi", d.phi)):
                w.writerow([name, "branch", bid, _g(vals[k])])
    write_marginals_csv(out / "marginals.csv", marginal_report(sol))


def _solve_and_write(case: NetworkCase, out: Path) -> int:
    topo, ldf, red = reduce_case(case)
    sol = solve_opf(red)
    print(f"status {sol.status}")
    if not sol.optimal:
        if sol.status == PRIMAL_INFEASIBLE:
            print("infeasible: the solver returned a certificate (a dual ray with negative cost)")
            return EXIT_INFEASIBLE
        print(f"solver stopped without a solution after {sol.result.iterations} iterations")
        return EXIT_ERROR
    print(f"J {_g(sol.J)}")
    out.mkdir(parents=True, exist_ok=True)
    write_solution(out, case, topo, ldf, sol)
    return EXIT_OK


def cmd_solve(args) -> int:
    limits = {}
    for item in args.flow_limit or ():
        key, _, val = item.partition("=")
        limits[int(key)] = float(val)
    case = with_flow_limits(load_case(args.case), limits)
    return _solve_and_write(case, Path(args.out))


def _parse_scale(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("--scale takes start:end:steps")
    return float(parts[0]), float(parts[1]), int(parts[2])


def cmd_sweep(args) -> int:
    start, end, steps = _parse_scale(args.scale)
    dg = [float(x) for x in args.dg.split(",")]
    if len(dg) != 3:
        raise ValueError("--dg takes count,pmax,qmag")
    lo, hi = (float(x) for x in args.cost_range.split(","))
    cfg = SweepConfig(
        case=args.case,
        seed=args.seed,
        dg_count=int(dg[0]),
        dg_p_max=dg[1],
        dg_q_mag=dg[2],
        dg_cost_range=(lo, hi),
        branches=tuple(int(b) for b in args.branches.split(",")),
        start=start,
        end=end,
        steps=steps,
        watch_bus=args.watch_bus,
        grid=args.grid,
        out_dir=args.out,
    )
    res = run_sweep(cfg, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "sweep.csv", res)
    if steps == 1:
        f = res.reduced.f_max.copy()
        for bid in cfg.branches:
            f[res.reduced.branch_index(bid)] *= start
        case = with_flow_limits(res.case, {bid: f[res.reduced.branch_index(bid)] for bid in cfg.branches})
        _solve_and_write(case, out)
    ok = [p for p in res.points if p.status == "optimal"]
    held = sum(p.holds for p in ok)
    print(f"frozen branches {' '.join(map(str, res.frozen))}")
    print(f"{len(ok)}/{len(res.points)} points optimal; bound holds at {held}/{len(ok)}")
    return EXIT_OK


def _random_spec(tokens):
    kv = dict(t.split("=", 1) for t in tokens)
    return int(kv["n"]), int(kv.get("seed", 0))


def cmd_validate(args) -> int:
    if args.random:
        n, seed = _random_spec(args.random)
        case = random_radial_case(n, seed)
        print(f"random case n={n} seed={seed}")
    elif args.case:
        try:
            case = load_case(args.case)
        except ValueError as exc:
            print(format_table([Check("case", False, str(exc))]))
            return EXIT_INVALID
    else:
        raise ValueError("validate needs a case or --random")
    checks = run_checks(case, fd=not args.no_fd)
    print(format_table(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldf-opf", description="LinDistFlow OPF with dual recovery and marginal prices")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve a case and write solution, duals and marginals")
    sp.add_argument("case", help="MATPOWER .m or native .json file, or a bundled case name")
    sp.add_argument("--flow-limit", action="append", metavar="ID=VAL", help="set a branch flow limit (p.u.)")
    sp.add_argument("--out", default=".", help="output directory")
    sp.set_defaults(func=cmd_solve)

    sw = sub.add_parser("sweep", help="two-branch flow-limit sweep")
    sw.add_argument("case")
    sw.add_argument("--branches", default="16,18")
    sw.add_argument("--scale", default="1.0:0.75:20", metavar="START:END:STEPS")
    sw.add_argument("--watch-bus", type=int, default=20)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--dg", default="25,0.0654,0.0270", metavar="COUNT,PMAX,QMAG")
    sw.add_argument("--cost-range", default="0,1", metavar="LO,HI")
    sw.add_argument("--grid", choices=("full", "diagonal"), default="full")
    sw.add_argument("--workers", type=int, default=None)
    sw.add_argument("--out", default=".")
    sw.set_defaults(func=cmd_sweep)

    va = sub.add_parser("validate", help="run the invariant suite")
    va.add_argument("case", nargs="?")
    va.add_argument("--random", nargs="+", metavar="KEY=VAL", help="n=N seed=S: generate a random tree instead")
    va.add_argument("--no-fd", action="store_true", help="skip the finite-difference check")
    va.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
