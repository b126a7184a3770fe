"""Corrective dispatch on the reference scenario with all three methods; prints a timing table."""

import argparse

from flexgrid.hull import for_hull, over_approximation
from flexgrid.opman import correct
from flexgrid.scenario import reference_scenario

ap = argparse.ArgumentParser()
ap.add_argument("--seed", type=int, default=7)
ap.add_argument("--methods", nargs="+", default=["convex", "milp2d", "milp3d"])
args = ap.parse_args()

sc = reference_scenario(args.seed)
for i, f in sorted(sc.fors.items()):
    print(f"bus {i}: hull over-approximation {over_approximation(f, for_hull(f)):.2f} %")

print(f"\n{'method':8} {'status':10} {'rounds':>6} {'objective':>10} {'geometry':>9} {'solve':>9} {'total':>9}")
for m in args.methods:
    r = correct(sc.grid, sc.fors, sc.limits, m, sc.config)
    t = r.wall_times
    obj = sum(r.objectives)
    print(f"{m:8} {r.status:10} {r.iterations:6d} {obj:10.5f} {t['geometry']:8.3f}s {t['solve']:8.3f}s {t['total']:8.3f}s")
