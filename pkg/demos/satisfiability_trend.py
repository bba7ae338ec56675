# # How often do random models satisfy the conditions?
#
# For ten variables, count how many random models must be drawn before one
# satisfies both conditions, as the number of sources grows.  More sources
# give each variable more private components, so satisfying models become
# easier to find.

import numpy as np

from pscm.experiments import ExperimentSpec, aggregate, parse_grid, run_experiment

grid = parse_grid("p=10;r=1.0:2.4:0.2;de=2;do=1.5")
spec = ExperimentSpec("satisfiability", grid, trials=30, seed=0)
rows = run_experiment(spec)
summary = aggregate(rows, "satisfiability")

print(" m   mean attempts   std")
for g in summary["groups"]:
    a = g["attempts"]
    print(f"{g['m']:3d}   {a['mean']:13.1f}   {a['std']:.1f}")

# A crude text plot of log10(mean attempts).

for g in summary["groups"]:
    bar = "#" * int(round(10 * np.log10(g["attempts"]["mean"])))
    print(f"{g['m']:3d} {bar}")
