"""How much profit each level of reliability costs.

Tightening alpha enlarges the safety margins, shrinking the feasible set,
so the optimum can only fall.  Random rows (cone constraints) and random
resource levels (shifted right-hand sides) are swept side by side.

Run: python3 demos/04_risk_level_tradeoff.py
"""

from importlib import resources

from ellipccp.estimators import estimate
from ellipccp.io import read_samples, read_spec
from ellipccp.solver import solve
from ellipccp.transform import build_program

DATA = resources.files("ellipccp") / "data"


def load(name):
    spec, paths = read_spec(DATA / name)
    return spec, {s.id: estimate(s) for s in map(read_samples, paths)}


rows = load("example2.spec")
rhs = load("example3.spec")
print(f"{'alpha':>6}  {'random rows z':>14}  {'random rhs z':>13}")
for alpha in (0.5, 0.25, 0.1, 0.05, 0.01, 0.001):
    zs = []
    for spec, ests in (rows, rhs):
        sol = solve(build_program(spec.with_alphas([alpha]), ests))
        zs.append(sol.z_value)
    print(f"{alpha:6.3f}  {zs[0]:14.2f}  {zs[1]:13.2f}")
