"""Trace the mean-dispersion trade-off when prices are random.

With random prices c the objective k1 * mean profit - k2 * sd(profit) is
a weighted sum of two goals.  Sweeping k1 from 0 to 1 walks along the
Pareto frontier: small k1 buys a lower spread at the cost of mean profit.

Run: python3 demos/02_mean_dispersion_frontier.py
"""

from importlib import resources
import math

import numpy as np

from ellipccp.estimators import estimate
from ellipccp.io import read_samples, read_spec
from ellipccp.transform import pareto_sweep

DATA = resources.files("ellipccp") / "data"

spec, paths = read_spec(DATA / "example1.spec")
ests = {s.id: estimate(s) for s in map(read_samples, paths)}
c = ests["ex1_c"]

print(f"{'k1':>5}  {'mean profit':>12}  {'sd of mean':>10}  {'Z':>10}   x")
for k1, sol in pareto_sweep(spec, ests, np.linspace(0.0, 1.0, 11)):
    sd = math.sqrt(sol.x @ c.unbiased_cov @ sol.x / c.N)
    print(f"{k1:5.2f}  {sol.z_value:12.2f}  {sd:10.2f}  {sol.Z_value:10.2f}   {sol.x.round(2)}")

# beyond k1 near 0.5 the linear term dominates and the LP vertex is optimal
