"""Congestion sweep on the 141-bus feeder with 25 distributed generators.

Writes sweep.csv into the current directory and prints the watched bus.
Set LDF_OPF_THREADS to cap the worker pool.
"""
import numpy as np

from ldf_opf.sweep import SweepConfig, run_sweep, write_sweep_csv

## set up and run
cfg = SweepConfig(case="case141", seed=0, branches=(16, 18), start=1.0, end=0.75, steps=20, watch_bus=20)
res = run_sweep(cfg)
print("frozen branches:", " ".join(map(str, res.frozen)))
write_sweep_csv("sweep.csv", res)

## uncongested prices
n_l = res.reduced.n_l
base = res.baseline_report.C_load
print(f"baseline reactive prices: max |C| = {np.abs(base[n_l:]).max():.2e}")

## the watched bus along the diagonal
print("\n scale    dC real    dC reactive   bound     binding")
for p in res.points:
    if p.scales[0] == p.scales[1]:
        print(f" {p.scales[0]:.3f}   {p.dC_real:9.5f}   {p.dC_reactive:9.5f}   {p.bound:8.4f}   {sorted(p.binding)}")

## over the whole grid
ok = [p for p in res.points if p.status == "optimal"]
congested = [p for p in ok if p.binding]
print(f"\n{len(ok)}/{len(res.points)} optimal, {len(congested)} congested, bound holds everywhere: {res.all_hold}")
if congested:
    ratio = max(p.max_lhs / p.bound for p in congested if p.bound > 0)
    print(f"largest shift / bound over congested points: {ratio:.3f}")
