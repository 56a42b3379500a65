"""Four-bus feeder: model matrices, one solve, and the multipliers behind it."""
import numpy as np

from ldf_opf.conic_solver import solve_opf
from ldf_opf.netcase import load_case, validate_radial
from ldf_opf.ldf import build_ldf
from ldf_opf.opf_model import check_dual_feasible, dual_value, reduce

np.set_printoptions(precision=4, suppress=True)

## the feeder
# slack 0 feeds load bus 2 (which feeds generator bus 1) and load bus 3
case = load_case("case4")
topo = validate_radial(case)
for br in case.branches:
    print(f"branch {br.id}: {br.from_bus} -> {br.to_bus}  r={br.r} x={br.x}")
print("downstream sets:", {b: sorted(topo.downstream[b]) for b in topo.buses})

## LinDistFlow matrices
# v = R p + X q + v0, with F[i, j] = -1 when bus j sits below branch i
ldf = build_ldf(case, topo)
print("F =\n", ldf.F)
print("R =\n", ldf.R)
print("X =\n", ldf.X)

k = ldf.branches.index(2)
print("branch 2 coefficients: r", ldf.r[k], " s", ldf.s[k], " t", ldf.t[k])

## reduced problem
red = reduce(case, topo, ldf)
for label, mp, mq, h in zip(red.row_labels, red.M_p[:, 0], red.M_q[:, 0], red.h):
    print(f"{label[0]:>7} {label[1]}  M_p={mp:+.3f}  M_q={mq:+.3f}  h={h:.3f}")

## solve without flow limits
sol = solve_opf(red)
print(f"\np_g={sol.p_g[0]:.4f}  q_g={sol.q_g[0]:.4f}  J={sol.J:.6f}")
# the generator is cheaper than the slack, so it runs at its cap
print("alpha_ub =", sol.dual.alpha_ub, " dual value", round(dual_value(red, sol.dual), 8))

## now limit branch 2
f = red.f_max.copy()
f[red.branch_index(2)] = 0.2
tight = solve_opf(red.with_params(f_max=f))
print(f"\nwith f_max(2)=0.2: p_g={tight.p_g[0]:.4f}  q_g={tight.q_g[0]:.4f}  J={tight.J:.6f}")
print("mu =", tight.dual.mu, " theta =", tight.dual.theta, " phi =", tight.dual.phi)
print("largest dual residual:", max(check_dual_feasible(tight.reduced, tight.dual).values()))
