"""End-to-end acceptance checks, one test per criterion.

Each test prints ``criterion k: PASS|FAIL ...``; the lines are repeated in
the pytest terminal summary.
"""

import math
import subprocess
import sys
import time

import numpy as np

from ellipccp import solver as solver_module
from ellipccp.elliptical import SHIPPED_GENERATORS, t_cdf, t_quantile
from ellipccp.estimators import mle_cov, scatter_matrix, unbiased_cov_elliptical
from ellipccp.io import parse_report
from ellipccp.model import Status
from ellipccp.solver import solve
from ellipccp.transform import build_program, pareto_sweep
from ellipccp.validate import coverage_test, invariance_test

from oracles import feasible_box, grid_search, random_case2_instance

EX1_LP = {"z": 14237.2881, "x": (47.45763, 123.7288, 45.76271)}
EX1_SWEEP = {0.1: (249.9528, 10295.28), 0.5: (6176.6103, 14237.29), 0.9: (12625.1526, 14237.29)}
EX2 = {"z": 10904.8076, "x": (38.84635, 81.64707, 46.38850)}
EX3 = {"z": 13997.1624}
EX4_SWEEP = {0.25: (1781.9370, 10275.38), 0.5: (4804.4404, 10895.75), 0.75: (7850.0963, 10895.75)}


def rel(a, b):
    return abs(a - b) / abs(b)


def test_criterion_01_example1_lp(criterion):
    # wall time of the command as a user runs it, interpreter start-up included
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "ellipccp", "reproduce", "example1", "--format", "structured"],
                          capture_output=True, text=True, timeout=60)
    elapsed = time.perf_counter() - t0
    lp = parse_report(proc.stdout.strip().split("\n\n")[0])
    z = float(lp["solution.z_value"])
    x = [float(lp[f"solution.x.{j}"]) for j in (1, 2, 3)]
    x_err = max(rel(a, b) for a, b in zip(x, EX1_LP["x"]))
    ok = proc.returncode == 0 and abs(z - EX1_LP["z"]) <= 1e-2 and x_err <= 1e-2 and elapsed < 1.0
    criterion(1, ok, f"z={z:.6f} |dz|={abs(z - EX1_LP['z']):.2e} max rel dx={x_err:.2e} time={elapsed:.3f}s")


def test_criterion_02_example1_sweep(criterion, example1):
    spec, ests = example1
    results = pareto_sweep(spec, ests, sorted(EX1_SWEEP))
    worst = 0.0
    for k1, sol in results:
        Z_ref, z_ref = EX1_SWEEP[k1]
        worst = max(worst, rel(sol.Z_value, Z_ref), rel(sol.z_value, z_ref))
    # the weighted objective written out from the raw example data
    k1, sol = results[1]
    x = sol.x
    identity = k1 * float(np.dot([50, 70, 70], x)) - (1 - k1) * math.sqrt(float(np.dot([450, 2600, 850], x**2)) / 12)
    id_err = abs(sol.Z_value - identity)
    ok = all(s.status is Status.OPTIMAL for _, s in results) and worst <= 1e-2 and id_err <= 1e-6
    criterion(2, ok, f"max rel err on (Z, z)={worst:.2e}; identity residual at k1=0.5: {id_err:.2e}")


def test_criterion_03_example2(criterion, example2):
    sol = solve(build_program(*example2))
    x_err = max(rel(a, b) for a, b in zip(sol.x, EX2["x"]))
    z_err = rel(sol.z_value, EX2["z"])
    ok = sol.status is Status.OPTIMAL and z_err <= 1e-2 and x_err <= 1e-2
    criterion(3, ok, f"z={sol.z_value:.6f} rel dz={z_err:.2e} max rel dx={x_err:.2e}")


def test_criterion_04_example3_pure_lp(criterion, example3, monkeypatch):
    program = build_program(*example3)

    def no_barrier(*args, **kwargs):
        raise AssertionError("cone solver called for a linear program")

    monkeypatch.setattr(solver_module, "_barrier_solve", no_barrier)
    sol = solve(program)
    z_err = rel(sol.z_value, EX3["z"])
    ok = (not program.has_cones) and sol.status is Status.OPTIMAL and z_err <= 1e-2
    criterion(4, ok, f"z={sol.z_value:.6f} rel dz={z_err:.2e} cone terms={program.has_cones} (simplex only)")


def test_criterion_05_example4_sweep(criterion, example4):
    spec, ests = example4
    results = pareto_sweep(spec, ests, sorted(EX4_SWEEP))
    worst = 0.0
    for k1, sol in results:
        Z_ref, z_ref = EX4_SWEEP[k1]
        worst = max(worst, rel(sol.Z_value, Z_ref), rel(sol.z_value, z_ref))
    ok = all(s.status is Status.OPTIMAL for _, s in results) and worst <= 1e-2
    criterion(5, ok, f"max rel err on (Z, z) over k1 in {sorted(EX4_SWEEP)}: {worst:.2e}")


def test_criterion_06_quantiles(criterion):
    q = t_quantile(24, 0.99)
    grid = np.concatenate([[1e-4, 1e-3], np.linspace(0.01, 0.99, 99), [1 - 1e-3, 1 - 1e-4]])
    trip = anti = 0.0
    for df in (1, 2, 3, 5, 10, 24, 30, 100, 1000):
        for p in grid:
            trip = max(trip, abs(t_cdf(df, t_quantile(df, p)) - p))
            # compare at an exactly complementary pair so the test does not measure 1 - p rounding
            hi = 1.0 - p if p < 0.5 else p
            lo = 1.0 - hi
            anti = max(anti, abs(t_quantile(df, lo) + t_quantile(df, hi)))
    ok = abs(q - 2.492159) <= 1e-5 and trip <= 1e-10 and anti <= 1e-10
    criterion(6, ok, f"t_quantile(24, 0.99)={q:.7f}; round trip {trip:.1e}; antisymmetry {anti:.1e}")


def test_criterion_07_invariance(criterion):
    t0 = time.perf_counter()
    results = invariance_test(SHIPPED_GENERATORS, N=10, M=2000, seed=0)

    def missing_root(X):
        Xc = X - X.mean(axis=1, keepdims=True)
        return math.sqrt(X.shape[1]) * X.mean(axis=1) / np.sqrt((Xc * Xc).sum(axis=1))

    [control] = invariance_test(["normal"], N=10, M=2000, seed=0, statistic=missing_root)
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in results) and not control.passed and elapsed < 30
    ks = ", ".join(f"{r.generator_id} {r.ks:.4f}" for r in results)
    criterion(7, ok, f"KS [{ks}] vs {results[0].critical:.4f}; control {control.ks:.4f} rejected; "
                     f"time={elapsed:.2f}s")


def test_criterion_08_coverage(criterion, example2):
    spec, ests = example2
    x = solve(build_program(spec, ests)).x
    worst = math.inf
    ok = True
    for gen in SHIPPED_GENERATORS:
        report = coverage_test(spec, ests, x, gen, M=20000, seed=0)
        for c in report.constraints:
            ok &= c.rate >= 0.99 - c.half_width
            worst = min(worst, c.rate - (0.99 - c.half_width))
    criterion(8, ok, f"smallest margin of rate over 0.99 - half-width: {worst:+.4f}")


def test_criterion_09_grid_oracle(criterion):
    worst = 0.0
    ok = True
    for seed in range(20):
        program = random_case2_instance(seed)
        sol = solve(program)
        best = grid_search(program, feasible_box(program), 1e-3)
        ok &= sol.status is Status.OPTIMAL
        worst = max(worst, rel(sol.Z_value, best))
    ok &= worst <= 1e-3
    criterion(9, ok, f"20 instances, max rel gap to grid search (step 1e-3): {worst:.2e}")


def test_criterion_10_estimators(criterion):
    rng = np.random.default_rng(2024)
    e_scatter = e_mle = e_unb = 0.0
    for N, d in [(12, 3), (25, 4), (5, 1), (50, 6)]:
        X = rng.normal(size=(N, d)) * rng.uniform(0.5, 50, d) + rng.uniform(-100, 100, d)
        S = scatter_matrix(X)
        C = np.eye(N) - np.ones((N, N)) / N
        outer = sum(np.outer(r - X.mean(axis=0), r - X.mean(axis=0)) for r in X)
        scale = np.abs(S).max()
        e_scatter = max(e_scatter, np.abs(S - X.T @ C @ X).max() / scale, np.abs(S - outer).max() / scale)
        e_mle = max(e_mle, np.abs(mle_cov(X, "normal") - S / N).max() / (scale / N))
        e_unb = max(e_unb, np.abs(unbiased_cov_elliptical(X, "normal") - S / (N - 1)).max() / (scale / (N - 1)))
    ok = e_scatter <= 1e-10 and e_mle <= 1e-8 and e_unb <= 1e-12
    criterion(10, ok, f"scatter routes {e_scatter:.1e}; normal MLE vs S/N {e_mle:.1e}; "
                      f"unbiased vs S/(N-1) {e_unb:.1e}")
