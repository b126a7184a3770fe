"""Reactive-injection robustness sweep on the reference scenario."""

import argparse

from flexgrid.opman import displacement, robustness_sweep
from flexgrid.powerflow import solve_power_flow
from flexgrid.scenario import reference_scenario

ap = argparse.ArgumentParser()
ap.add_argument("--method", default="convex")
ap.add_argument("--levels", type=float, nargs="+", default=[-50, -100, -150, -200])
args = ap.parse_args()

sc = reference_scenario()
bus = sc.sweep.bus
v0 = solve_power_flow(sc.grid).v[bus]
res = robustness_sweep(sc.grid, sc.fors, sc.limits, args.method, bus, args.levels, sc.config)
print(f"injection bus {bus}, method {args.method}")
print(f"{'Mvar':>7} {'dv_pre':>9} {'status':10} {'rounds':>6} {'displacement':>12} members")
for lvl, r in zip(args.levels, res):
    dv = r.initial_state.v[bus] - v0 if r.initial_state is not None else float("nan")
    print(f"{lvl:7.0f} {dv:9.5f} {r.status:10} {r.iterations:6d} {displacement(r, sc.fors):12.5f} "
          f"{all(r.membership.values())}")
