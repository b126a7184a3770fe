"""Write the seeded 30-bus reference scenario (grid, FORs, scenario.json)."""

import argparse

from flexgrid.scenario import reference_scenario, summary, write_scenario

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="fixtures/reference")
ap.add_argument("--seed", type=int, default=7)
args = ap.parse_args()

sc = reference_scenario(args.seed)
path = write_scenario(sc, args.out)
print(path)
for k, v in summary(sc).items():
    print(f"  {k}: {v}")
