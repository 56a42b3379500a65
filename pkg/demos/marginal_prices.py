"""Load and flow prices on a random feeder, checked against finite differences."""
import numpy as np

from ldf_opf.conic_solver import solve_opf
from ldf_opf.marginals import fd_gradient_oracle, marginal_report, theorem1_check
from ldf_opf.netcase import random_radial_case
from ldf_opf.opf_model import reduce_case

## a feeder with some congestion
case = random_radial_case(15, seed=2)
topo, ldf, red = reduce_case(case)
free = solve_opf(red)

# cap the three busiest branches that carry generation at 80% of their free flow
fp, fq = free.flows()
mag = np.hypot(fp, fq)
carrying = [k for k, b in enumerate(red.branches) if set(red.gen_buses) & topo.branch_downstream(b)]
busiest = sorted(carrying, key=lambda k: -mag[k])[:3]
f = red.f_max.copy()
f[busiest] = 0.8 * mag[busiest]
tight = red.with_params(f_max=f)
sol = solve_opf(tight)
print(f"J free {free.J:.6f}   J limited {sol.J:.6f}")

## closed-form prices
rep = marginal_report(sol, free)
print("binding branches:", sorted(rep.binding_set), " K =", round(rep.K, 4))
for k in busiest:
    print(f"  branch {red.branches[k]}: flow {rep.flow[k]:.4f} / {rep.limit[k]:.4f}  C_flow {rep.C_flow[k]:+.4f}")

## finite differences agree
n_l = red.n_l
print("\n coordinate        closed       central")
priced = [i for i in range(2 * n_l) if abs(rep.C_load[i]) > 1e-6]
for i in priced[:8]:
    fd = fd_gradient_oracle(tight, ("load", i))
    axis = "p" if i < n_l else "q"
    print(f" {axis}_l bus {red.load_buses[i % n_l]:>3}   {rep.C_load[i]:+.6f}   {fd.value:+.6f}{'  (kink)' if fd.kink else ''}")
for k in busiest:
    fd = fd_gradient_oracle(tight, ("flow", red.branches[k]))
    print(f" limit {red.branches[k]:>3}       {rep.C_flow[k]:+.6f}   {fd.value:+.6f}")

## how far congestion moves the prices
chk = theorem1_check(rep, marginal_report(free, free))
worst = max(chk.lhs_real.max(), chk.lhs_reactive.max())
print(f"\nlargest price shift {worst:.4f}  <=  bound {chk.rhs:.4f}: {chk.holds}")
