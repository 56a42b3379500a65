"""Instance builders shared by the test modules."""
import dataclasses

import numpy as np

from ldf_opf.conic_solver import solve_opf
from ldf_opf.netcase import Bus, random_radial_case
from ldf_opf.opf_model import reduce_case


def limit_busiest(case, factor=0.8, count=3):
    """Limit the ``count`` busiest generator-carrying branches of ``case`` to
    ``factor`` of their unconstrained flow."""
    topo, _, red = reduce_case(case)
    sol = solve_opf(red)
    fp, fq = sol.flows()
    mag = np.hypot(fp, fq)
    gens = set(red.gen_buses)
    cands = [
        k for k, bid in enumerate(red.branches)
        if gens & topo.branch_downstream(bid) and mag[k] > 1e-3
    ]
    cands.sort(key=lambda k: -mag[k])
    limits = {red.branches[k]: factor * mag[k] for k in cands[:count]}
    return case.replace(
        branches=tuple(
            dataclasses.replace(br, f_max=limits[br.id]) if br.id in limits else br
            for br in case.branches
        )
    )


def congested_case(n, seed, factor=0.8, count=3):
    return limit_busiest(random_radial_case(n, seed), factor, count)


def one_generator_case(n, seed, cost_gap=0.05, factor=0.8):
    """Random tree keeping only its first generator, priced ``cost_gap`` below
    the slack, with the busiest branch above it limited."""
    case = random_radial_case(n, seed)
    keep = case.generators[0]
    drop = {g.bus for g in case.generators[1:]}
    buses = tuple(
        Bus(b.id, "load", b.v_min, b.v_max) if b.id in drop else b for b in case.buses
    )
    gen = dataclasses.replace(keep, cost=case.slack.cost - cost_gap)
    case = case.replace(buses=buses, generators=(gen,))
    return limit_busiest(case, factor, count=1)
