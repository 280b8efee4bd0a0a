"""Command-line front end.

Subcommands::

    ellipccp estimate  --samples F...  [--generator ID]
    ellipccp transform --spec F [--samples F...] [--alpha LIST] [--k1 R]
    ellipccp solve     --spec F [--samples F...] [--alpha LIST] [--k1 R] [--check REPORT]
    ellipccp pareto    --spec F [--grid LIST]
    ellipccp validate  --spec F [--generator ID...] [--M N]     (coverage)
    ellipccp validate  --invariance [--generator ID...] [--N N] [--M N]
    ellipccp reproduce example1|example2|example3|example4|all [--k1 R]

Every subcommand takes ``--format table|structured`` and ``--seed``.  Exit
codes: 0 success, 1 unreadable or malformed input, 2 the problem or a
validation check failed, 3 the solver did not reach an optimal point.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from . import __version__
from .elliptical import SHIPPED_GENERATORS, registry_get
from .estimators import estimate
from .fixtures import example_samples
from .io import ParseError, format_report, parse_report, read_samples, read_spec
from .model import Sense, Status, validate_spec
from .solver import SolverOptions, solve
from .transform import UnsupportedMixError, build_program, detect_case, pareto_sweep

__all__ = ["RunConfig", "run", "main", "build_parser"]

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3

EXAMPLES = {
    "example1": ("example1_deterministic.spec", "example1.spec"),
    "example2": ("example2.spec",),
    "example3": ("example3.spec",),
    "example4": ("example4.spec",),
}
DEFAULT_GRIDS = {"example1": (0.1, 0.5, 0.9), "example4": (0.25, 0.5, 0.75)}

# published optima of the worked examples, shown next to the computed values
REFERENCE = {
    "example1_deterministic.spec": {None: {"z": 14237.2881, "x": (47.45763, 123.7288, 45.76271)}},
    "example1.spec": {
        0.1: {"Z": 249.9528, "z": 10295.28},
        0.5: {"Z": 6176.6103, "z": 14237.29},
        0.9: {"Z": 12625.1526, "z": 14237.29},
    },
    "example2.spec": {None: {"z": 10904.8076, "x": (38.8463, 81.6471, 46.3885)}},
    "example3.spec": {None: {"z": 13997.1624, "x": (44.92657, 122.9198, 44.9493)}},
    "example4.spec": {
        0.25: {"Z": 1781.9370, "z": 10275.38},
        0.5: {"Z": 4804.4404, "z": 10895.75},
        0.75: {"Z": 7850.0963, "z": 10895.75},
    },
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Everything one invocation needs, resolved from the command line."""

    command: str
    spec: Optional[Path] = None
    samples: tuple = ()
    fmt: str = "table"
    seed: Optional[int] = None
    options: SolverOptions = field(default_factory=SolverOptions)
    alpha: Optional[tuple] = None
    k1: Optional[float] = None
    grid: Optional[tuple] = None
    generators: tuple = ()
    M: Optional[int] = None
    N: int = 10
    invariance: bool = False
    example: Optional[str] = None
    check: Optional[Path] = None


# --- loading -----------------------------------------------------------------


def _data_path(name: str) -> Path:
    return Path(str(resources.files("ellipccp") / "data" / name))


def _load(spec_path, extra_samples=(), alpha=None, k1=None, samples_override=None):
    """Spec, sample sets and estimator bundles, checked by validate_spec."""
    spec, paths = read_spec(spec_path)
    samples = {}
    if samples_override is not None:
        samples.update(samples_override)
    else:
        for p in paths:
            s = read_samples(p)
            samples[s.id] = s
    for p in extra_samples:
        s = read_samples(p)
        samples[s.id] = s
    if alpha is not None:
        try:
            spec = spec.with_alphas(alpha)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INVALID) from None
    if k1 is not None:
        spec = spec.with_weights(k1)
    diags = validate_spec(spec, samples)
    if diags:
        raise CliError("\n".join(str(d) for d in diags), EXIT_INVALID)
    ests = {sid: estimate(s) for sid, s in samples.items()}
    return spec, samples, ests


def _build(spec, ests):
    try:
        return build_program(spec, ests)
    except UnsupportedMixError as exc:
        raise CliError(f"{exc.code}: {exc}", EXIT_INVALID) from None
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise CliError(str(exc), EXIT_INVALID) from None


# --- report fields -----------------------------------------------------------


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _header(command, cfg):
    return {
        "report.version": 1,
        "report.tool": f"ellipccp {__version__}",
        "report.command": command,
        "report.timestamp": _timestamp(),
    }


def _problem_fields(spec, program, ests, spec_path, sample_paths=()):
    out = {}
    if spec_path is not None:
        out["problem.spec"] = str(spec_path)
    for k, p in enumerate(sample_paths, start=1):
        out[f"problem.samples.{k}"] = str(p)
    out["problem.sense"] = spec.sense.value
    out["problem.n_vars"] = spec.n_vars
    out["problem.m"] = spec.m
    out["problem.k1"] = float(spec.k1)
    out["problem.k2"] = float(spec.k2)
    out["problem.case"] = program.case
    for i, (a, q) in enumerate(zip(spec.alphas, program.quantiles), start=1):
        out[f"problem.alpha.{i}"] = None if a is None else float(a)
        out[f"problem.quantile.{i}"] = None if q is None else float(q)
    for sid in sorted(ests):
        e = ests[sid]
        out[f"estimator.{sid}.N"] = e.N
        out[f"estimator.{sid}.d"] = e.d
        out[f"estimator.{sid}.checksum"] = e.checksum
    return out


def _solution_fields(sol, prefix="solution"):
    out = {f"{prefix}.status": sol.status.value, f"{prefix}.message": sol.message or "none"}
    for j, v in enumerate(sol.x, start=1):
        out[f"{prefix}.x.{j}"] = float(v)
    out[f"{prefix}.Z_value"] = float(sol.Z_value)
    out[f"{prefix}.z_value"] = float(sol.z_value)
    out[f"{prefix}.max_constraint_violation"] = float(sol.max_constraint_violation)
    out[f"{prefix}.kkt_residual"] = float(sol.kkt_residual)
    out[f"{prefix}.iterations"] = int(sol.iterations)
    if sol.duals is not None:
        for i, v in enumerate(sol.duals, start=1):
            out[f"{prefix}.dual.{i}"] = float(v)
    return out


def _options_fields(options):
    return {
        "solver.feasibility_tol": options.feasibility_tol,
        "solver.kkt_tol": options.kkt_tol,
        "solver.max_iterations": options.max_iterations,
        "solver.cone_smoothing_eps": options.cone_smoothing_eps,
    }


# --- table rendering ---------------------------------------------------------


def _num(v) -> str:
    return "-" if v is None else f"{v:.6f}"


def _table(title, columns, rows, out):
    """Plain aligned table: ``rows`` is a list of (label, [cells])."""
    width0 = max([len("variable")] + [len(r[0]) for r in rows])
    widths = [max([len(c)] + [len(r[1][k]) for r in rows]) for k, c in enumerate(columns)]
    out.write(f"{title}\n")
    out.write("  ".join(["variable".ljust(width0)] + [c.rjust(w) for c, w in zip(columns, widths)]) + "\n")
    for label, cells in rows:
        out.write("  ".join([label.ljust(width0)] + [c.rjust(w) for c, w in zip(cells, widths)]) + "\n")


def _solution_rows(solutions, sense, weighted):
    n = solutions[0].x.size
    tag = "max" if sense is Sense.MAXIMIZE else "min"
    rows = [(f"x{j + 1}", [_num(s.x[j]) for s in solutions]) for j in range(n)]
    if weighted:
        rows.append((f"Z_{tag}", [_num(s.Z_value) for s in solutions]))
    rows.append((f"z_{tag}", [_num(s.z_value) for s in solutions]))
    rows.append(("status", [s.status.value for s in solutions]))
    return rows


def _weighted(program) -> bool:
    return program.cone_objective is not None or program.case in ("I", "IV")


# --- subcommands -------------------------------------------------------------


def _cmd_estimate(cfg, out):
    if not cfg.samples:
        raise CliError("estimate needs --samples", EXIT_PARSE)
    gen = cfg.generators[0] if cfg.generators else None
    fields = _header("estimate", cfg)
    for p in cfg.samples:
        s = read_samples(p)
        e = estimate(s, gen)
        if cfg.fmt == "structured":
            pre = f"estimator.{s.id}"
            fields[f"{pre}.path"] = str(p)
            fields[f"{pre}.N"] = e.N
            fields[f"{pre}.d"] = e.d
            fields[f"{pre}.checksum"] = e.checksum
            for j, v in enumerate(e.mean, start=1):
                fields[f"{pre}.mean.{j}"] = float(v)
            for i in range(e.d):
                for j in range(e.d):
                    fields[f"{pre}.unbiased_cov.{i + 1}.{j + 1}"] = float(e.unbiased_cov[i, j])
            if e.mle_cov is not None:
                fields[f"{pre}.generator"] = e.generator_id
                for i in range(e.d):
                    for j in range(e.d):
                        fields[f"{pre}.mle_cov.{i + 1}.{j + 1}"] = float(e.mle_cov[i, j])
        else:
            out.write(f"sample set {s.id}  (N={e.N}, d={e.d}, checksum {e.checksum})\n")
            out.write("  mean     " + "  ".join(f"{v:12.6f}" for v in e.mean) + "\n")
            for i, row in enumerate(e.unbiased_cov):
                label = "  S*       " if i == 0 else "           "
                out.write(label[:-1] + "  ".join(f"{v:12.6f}" for v in row) + "\n")
            if e.mle_cov is not None:
                out.write(f"  maximum likelihood covariance under {e.generator_id}\n")
                for row in e.mle_cov:
                    out.write("          " + "  ".join(f"{v:12.6f}" for v in row) + "\n")
            out.write("\n")
    if cfg.fmt == "structured":
        out.write(format_report(fields))
    return EXIT_OK


def _cmd_transform(cfg, out):
    spec, _, ests = _load(cfg.spec, cfg.samples, cfg.alpha, cfg.k1)
    program = _build(spec, ests)
    if cfg.fmt == "structured":
        fields = _header("transform", cfg)
        fields.update(_problem_fields(spec, program, ests, cfg.spec))
        for j, v in enumerate(program.linear_objective, start=1):
            fields[f"program.objective.linear.{j}"] = float(v)
        if program.cone_objective is not None:
            _cone_fields(fields, "program.objective.cone", program.cone_objective)
        for i, con in enumerate(program.constraints, start=1):
            for j, v in enumerate(con.linear, start=1):
                fields[f"program.constraint.{i}.linear.{j}"] = float(v)
            fields[f"program.constraint.{i}.offset"] = float(con.offset)
            if con.cone is not None:
                _cone_fields(fields, f"program.constraint.{i}.cone", con.cone)
        out.write(format_report(fields))
        return EXIT_OK
    out.write(f"case {program.case}, {program.sense.value}\n")
    obj = _affine(program.linear_objective, None)
    if program.cone_objective is not None:
        c = program.cone_objective
        sign = "-" if c.scale < 0 else "+"
        obj += f" {sign} {abs(c.scale):.6g} * ||L0 x||"
    out.write(f"  objective  {obj}\n")
    for i, con in enumerate(program.constraints, start=1):
        text = _affine(con.linear, None)
        if con.cone is not None:
            y = "(x, -1)" if con.cone.augmented else "x"
            text += f" + {con.cone.scale:.6g} * ||L{i} {y}||"
        q = program.quantiles[i - 1] if program.quantiles else None
        note = "" if q is None else f"    (t quantile {q:.6f})"
        out.write(f"  c{i}: {text} <= {-con.offset:.6g}{note}\n")
    for label, cone in [("L0", program.cone_objective)] + [
        (f"L{i}", c.cone) for i, c in enumerate(program.constraints, start=1)
    ]:
        if cone is not None:
            out.write(f"  {label} (L'L = scaled S*):\n")
            for row in cone.root:
                out.write("      " + "  ".join(f"{v:11.6f}" for v in row) + "\n")
    return EXIT_OK


def _cone_fields(fields, pre, cone):
    fields[f"{pre}.scale"] = float(cone.scale)
    fields[f"{pre}.augmented"] = bool(cone.augmented)
    r, k = cone.root.shape
    fields[f"{pre}.rank"] = r
    for i in range(r):
        for j in range(k):
            fields[f"{pre}.root.{i + 1}.{j + 1}"] = float(cone.root[i, j])


def _affine(coefs, _):
    terms = []
    for j, v in enumerate(coefs, start=1):
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        terms.append(f"{sign} {abs(v):.6g} x{j}")
    if not terms:
        return "0"
    text = " ".join(terms)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def _solve_report(cfg, spec_path, sample_paths, extra_samples, samples_override=None):
    spec, samples, ests = _load(spec_path, extra_samples, cfg.alpha, cfg.k1, samples_override)
    program = _build(spec, ests)
    sol = solve(program, cfg.options)
    fields = _header("solve", cfg)
    fields.update(_problem_fields(spec, program, ests, spec_path, sample_paths))
    fields.update(_options_fields(cfg.options))
    fields.update(_solution_fields(sol))
    return spec, program, sol, fields


def _cmd_solve(cfg, out, err):
    if cfg.check is not None:
        return _check_report(cfg, out, err)
    spec, program, sol, fields = _solve_report(cfg, cfg.spec, cfg.samples, cfg.samples)
    if cfg.fmt == "structured":
        out.write(format_report(fields))
    else:
        title = f"case {program.case} solution"
        _table(title, ["value"], _solution_rows([sol], spec.sense, _weighted(program)), out)
    if sol.status is not Status.OPTIMAL:
        err.write(f"solver: {sol.status.value}: {sol.message}\n")
        return EXIT_SOLVER
    return EXIT_OK


def _check_report(cfg, out, err):
    """Re-run the solve recorded in a structured report and compare field by field."""
    try:
        text = Path(cfg.check).read_text()
    except OSError as exc:
        raise CliError(f"cannot read report {cfg.check}: {exc.strerror}", EXIT_PARSE) from None
    old = parse_report(text, str(cfg.check))
    if old.get("report.command") != "solve":
        raise CliError(f"{cfg.check} is not a solve report", EXIT_PARSE)
    spec_path = Path(old["problem.spec"])
    extra = tuple(Path(v) for k, v in old.items() if k.startswith("problem.samples."))
    opts = SolverOptions(
        feasibility_tol=float(old["solver.feasibility_tol"]),
        kkt_tol=float(old["solver.kkt_tol"]),
        max_iterations=int(old["solver.max_iterations"]),
        cone_smoothing_eps=float(old["solver.cone_smoothing_eps"]),
    )
    m = int(old["problem.m"])
    alphas = [old.get(f"problem.alpha.{i}", "none") for i in range(1, m + 1)]
    alpha = None if any(a == "none" for a in alphas) else tuple(float(a) for a in alphas)
    rerun_cfg = replace(cfg, options=opts, alpha=alpha, k1=float(old["problem.k1"]))
    _, _, _, fields = _solve_report(rerun_cfg, spec_path, extra, extra)
    new = parse_report(format_report(fields))
    diffs = [k for k in sorted(set(old) | set(new)) if k != "report.timestamp" and old.get(k) != new.get(k)]
    if diffs:
        for k in diffs:
            err.write(f"mismatch {k}: report has {old.get(k)!r}, re-run gives {new.get(k)!r}\n")
        return EXIT_INVALID
    out.write(f"report {cfg.check} reproduced: {len(new) - 1} fields identical (timestamp ignored)\n")
    return EXIT_OK


def _sweep(spec, ests, grid, options):
    try:
        return pareto_sweep(spec, ests, grid, options)
    except UnsupportedMixError as exc:
        raise CliError(f"{exc.code}: {exc}", EXIT_INVALID) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None


def _cmd_pareto(cfg, out, err):
    spec, _, ests = _load(cfg.spec, cfg.samples, cfg.alpha, None)
    grid = cfg.grid or ((cfg.k1,) if cfg.k1 is not None else (0.1, 0.5, 0.9))
    results = _sweep(spec, ests, grid, cfg.options)
    _emit_sweep("pareto", cfg, spec, ests, results, out, cfg.spec)
    return _sweep_status(results, err)


def _emit_sweep(command, cfg, spec, ests, results, out, spec_path, reference=None):
    if cfg.fmt == "structured":
        fields = _header(command, cfg)
        program = build_program(spec.with_weights(results[0][0]) if results else spec, ests)
        fields.update(_problem_fields(spec, program, ests, spec_path))
        fields.update(_options_fields(cfg.options))
        fields["pareto.points"] = len(results)
        for k, (k1, sol) in enumerate(results, start=1):
            fields[f"pareto.{k}.k1"] = float(k1)
            fields[f"pareto.{k}.k2"] = float(1.0 - k1)
            fields.update(_solution_fields(sol, f"pareto.{k}"))
        out.write(format_report(fields))
        return
    cols = [f"k1={k1:g}" for k1, _ in results]
    rows = _solution_rows([s for _, s in results], spec.sense, True) if results else []
    if reference:
        for label, key in (("Z ref", "Z"), ("z ref", "z")):
            rows.append((label, [_num(reference.get(k1, {}).get(key)) for k1, _ in results]))
    _table(f"Pareto sweep, case {detect_case(spec).value}", cols, rows, out)


def _sweep_status(results, err):
    bad = [(k1, s) for k1, s in results if s.status is not Status.OPTIMAL]
    for k1, s in bad:
        err.write(f"solver: k1={k1:g}: {s.status.value}: {s.message}\n")
    return EXIT_SOLVER if bad else EXIT_OK


def _cmd_validate(cfg, out, err):
    from .validate import coverage_test, invariance_test

    gens = cfg.generators or SHIPPED_GENERATORS
    seed = 0 if cfg.seed is None else cfg.seed
    try:
        for g in gens:
            registry_get(g)
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    fields = _header("validate", cfg)
    failed = False
    if cfg.invariance:
        M = cfg.M or 2000
        try:
            results = invariance_test(gens, cfg.N, M, seed)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INVALID) from None
        rows = []
        for k, r in enumerate(results, start=1):
            failed |= not r.passed
            fields[f"invariance.{k}.generator"] = r.generator_id
            fields[f"invariance.{k}.ks"] = r.ks
            fields[f"invariance.{k}.critical"] = r.critical
            fields[f"invariance.{k}.passed"] = r.passed
            rows.append((r.generator_id, [f"{r.ks:.5f}", f"{r.critical:.5f}", "pass" if r.passed else "FAIL"]))
        if cfg.fmt == "structured":
            fields.update({"invariance.N": cfg.N, "invariance.M": M, "invariance.seed": seed})
            out.write(format_report(fields))
        else:
            _table(f"studentised-mean invariance, N={cfg.N}, M={M}, seed={seed}",
                   ["KS", "critical(1%)", "result"], rows, out)
        return EXIT_INVALID if failed else EXIT_OK

    if cfg.spec is None:
        raise CliError("validate needs --spec (coverage) or --invariance", EXIT_PARSE)
    spec, _, ests = _load(cfg.spec, cfg.samples, cfg.alpha, cfg.k1)
    program = _build(spec, ests)
    sol = solve(program, cfg.options)
    if sol.status is not Status.OPTIMAL:
        err.write(f"solver: {sol.status.value}: {sol.message}\n")
        return EXIT_SOLVER
    M = cfg.M or 20000
    fields.update(_problem_fields(spec, program, ests, cfg.spec))
    fields.update(_solution_fields(sol))
    for g_idx, g in enumerate(gens, start=1):
        rep = coverage_test(spec, ests, sol.x, g, M, seed)
        failed |= not rep.passed
        if cfg.fmt == "structured":
            pre = f"coverage.{g_idx}"
            fields[f"{pre}.generator"] = rep.generator_id
            fields[f"{pre}.M"] = rep.M
            fields[f"{pre}.seed"] = rep.seed
            for c in rep.constraints:
                fields[f"{pre}.constraint.{c.index}.rate"] = c.rate
                fields[f"{pre}.constraint.{c.index}.nominal"] = c.nominal
                fields[f"{pre}.constraint.{c.index}.wilson_low"] = c.low
                fields[f"{pre}.constraint.{c.index}.wilson_high"] = c.high
                fields[f"{pre}.constraint.{c.index}.passed"] = c.passed
        else:
            rows = [(f"c{c.index}", [f"{c.rate:.4f}", f"{c.nominal:.4f}", f"[{c.low:.4f}, {c.high:.4f}]",
                                     "pass" if c.passed else "FAIL"]) for c in rep.constraints]
            _table(f"coverage under {rep.generator_id}, M={M}, seed={seed}",
                   ["rate", "nominal", "wilson 95%", "result"], rows, out)
            out.write("\n")
    if cfg.fmt == "structured":
        out.write(format_report(fields))
    return EXIT_INVALID if failed else EXIT_OK


def _cmd_reproduce(cfg, out, err):
    names = list(EXAMPLES) if cfg.example == "all" else [cfg.example]
    code = EXIT_OK
    override = None
    if cfg.seed is not None:
        override = example_samples(cfg.seed)
    for name in names:
        for spec_file in EXAMPLES[name]:
            path = _data_path(spec_file)
            spec, _, ests = _load(path, (), cfg.alpha, None, samples_override=_subset(path, override))
            ref = REFERENCE.get(spec_file, {})
            case = detect_case(spec).value
            if case in ("I", "IV"):
                grid = (cfg.k1,) if cfg.k1 is not None else DEFAULT_GRIDS[name]
                results = _sweep(spec, ests, grid, cfg.options)
                _emit_sweep("reproduce", cfg, spec, ests, results, out, path, ref)
                status = _sweep_status(results, err)
            else:
                rcfg = replace(cfg, k1=None)
                _, program, sol, fields = _solve_report(rcfg, path, (), (), _subset(path, override))
                if cfg.fmt == "structured":
                    out.write(format_report(fields))
                else:
                    rows = _solution_rows([sol], spec.sense, False)
                    r = ref.get(None, {})
                    for j, v in enumerate(r.get("x", ()), start=1):
                        rows.append((f"x{j} ref", [_num(v)]))
                    if "z" in r:
                        rows.append(("z ref", [_num(r["z"])]))
                    _table(f"{name} ({spec_file}), case {program.case}", ["value"], rows, out)
                status = EXIT_OK
                if sol.status is not Status.OPTIMAL:
                    err.write(f"solver: {sol.status.value}: {sol.message}\n")
                    status = EXIT_SOLVER
            code = max(code, status)
            out.write("\n")
    return code


def _subset(spec_path, override):
    if override is None:
        return None
    _, paths = read_spec(spec_path)
    ids = {Path(p).stem for p in paths}
    return {k: v for k, v in override.items() if k in ids}


# --- argument parsing --------------------------------------------------------


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", dest="fmt", choices=("table", "structured"), default="table")
    common.add_argument("--seed", type=int, default=None, help="master seed for all randomness")
    common.add_argument("--tol-feas", type=float, default=None, help="feasibility tolerance")
    common.add_argument("--tol-kkt", type=float, default=None, help="stationarity tolerance")
    common.add_argument("--samples", nargs="+", type=Path, default=(), metavar="PATH")
    common.add_argument("--alpha", type=_float_list, default=None, help="risk levels, one or one per constraint")
    common.add_argument("--k1", type=float, default=None, help="mean weight k1 (k2 = 1 - k1)")

    parser = argparse.ArgumentParser(prog="ellipccp", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"ellipccp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="mean, S* and optional MLE of sample files")
    p.add_argument("--generator", dest="generators", action="append", default=[])

    p = sub.add_parser("transform", parents=[common], help="print the deterministic equivalent")
    p.add_argument("--spec", type=Path, required=True)

    p = sub.add_parser("solve", parents=[common], help="solve the deterministic equivalent")
    p.add_argument("--spec", type=Path)
    p.add_argument("--check", type=Path, help="re-run a structured solve report and compare")

    p = sub.add_parser("pareto", parents=[common], help="sweep k1 over a grid")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--grid", type=_float_list, default=None)

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo coverage or invariance checks")
    p.add_argument("--spec", type=Path)
    p.add_argument("--invariance", action="store_true")
    p.add_argument("--generator", dest="generators", action="append", default=[])
    p.add_argument("--M", type=int, default=None, help="replications")
    p.add_argument("--N", type=int, default=10, help="sample size for --invariance")

    p = sub.add_parser("reproduce", parents=[common], help="solve the shipped worked examples")
    p.add_argument("example", choices=tuple(EXAMPLES) + ("all",))
    return parser


def config_from_args(args) -> RunConfig:
    opts = SolverOptions()
    if args.tol_feas is not None or args.tol_kkt is not None:
        opts = replace(
            opts,
            feasibility_tol=args.tol_feas if args.tol_feas is not None else opts.feasibility_tol,
            kkt_tol=args.tol_kkt if args.tol_kkt is not None else opts.kkt_tol,
        )
    return RunConfig(
        command=args.command,
        spec=getattr(args, "spec", None),
        samples=tuple(args.samples),
        fmt=args.fmt,
        seed=args.seed,
        options=opts,
        alpha=args.alpha,
        k1=args.k1,
        grid=getattr(args, "grid", None),
        generators=tuple(getattr(args, "generators", ()) or ()),
        M=getattr(args, "M", None),
        N=getattr(args, "N", 10),
        invariance=getattr(args, "invariance", False),
        example=getattr(args, "example", None),
        check=getattr(args, "check", None),
    )


def run(cfg: RunConfig, out: TextIO = None, err: TextIO = None) -> int:
    """Execute one command; returns the exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        if cfg.command == "solve" and cfg.spec is None and cfg.check is None:
            raise CliError("solve needs --spec or --check", EXIT_PARSE)
        if cfg.command == "estimate":
            return _cmd_estimate(cfg, out)
        if cfg.command == "transform":
            return _cmd_transform(cfg, out)
        if cfg.command == "solve":
            return _cmd_solve(cfg, out, err)
        if cfg.command == "pareto":
            return _cmd_pareto(cfg, out, err)
        if cfg.command == "validate":
            return _cmd_validate(cfg, out, err)
        if cfg.command == "reproduce":
            return _cmd_reproduce(cfg, out, err)
        raise CliError(f"unknown command {cfg.command!r}", EXIT_PARSE)
    except ParseError as exc:
        err.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except CliError as exc:
        err.write(f"error: {exc}\n")
        return exc.code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
