"""Text formats: sample files, problem spec files and key/value reports.

Sample file::

    # id: ex2_a1
    a11,a12,a13
    12.31,1.87,4.02
    ...

Spec file (``#`` starts a comment; blank lines are ignored)::

    sense = maximize
    n_vars = 3
    objective = @ex1_c          # or: 50, 70, 70
    k1 = 0.5                    # k2 defaults to 1 - k1
    samples = ex1_c.csv         # paths relative to the spec file
    constraint.1.row = 12, 2, 4 # or: @ex2_a1
    constraint.1.rhs = 1000     # or: @ex3_b[1]  (1-based column)
    constraint.1.joint = @ex4_g1
    constraint.1.alpha = 0.01

A constraint either has ``row`` and ``rhs`` or a single ``joint`` entry.
The randomness case is never declared; it follows from the references.

Report: one ``key = value`` line per field with dotted keys.  Values are
kept as text, so ``format_report(parse_report(s)) == s``.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .model import (
    ColumnRef,
    ConstraintSpec,
    FixedScalar,
    FixedVector,
    ProblemSpec,
    RandomRef,
    SampleSet,
    Sense,
)

__all__ = [
    "ParseError",
    "read_samples",
    "parse_samples",
    "write_samples",
    "format_samples",
    "read_spec",
    "parse_spec",
    "format_report",
    "parse_report",
]


class ParseError(ValueError):
    """Malformed input, with the 1-based line and column when known."""

    def __init__(self, message: str, source: str = "<input>", line: Optional[int] = None,
                 column: Optional[int] = None):
        self.source, self.line, self.column = source, line, column
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


# --- samples -----------------------------------------------------------------

_ID_LINE = re.compile(r"#\s*id\s*:\s*(\S+)\s*$")


def parse_samples(text: str, source: str = "<input>") -> SampleSet:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty sample file", source, 1)
    m = _ID_LINE.match(lines[0].strip())
    if not m:
        raise ParseError("first line must be '# id: <name>'", source, 1, 1)
    sample_id = m.group(1)
    if len(lines) < 2 or not lines[1].strip():
        raise ParseError("second line must list the column names", source, 2, 1)
    columns = tuple(c.strip() for c in lines[1].split(","))
    if any(not c for c in columns):
        raise ParseError("empty column name in header", source, 2)
    d = len(columns)
    rows = []
    for lineno, raw in enumerate(lines[2:], start=3):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != d:
            raise ParseError(f"expected {d} values, found {len(fields)}", source, lineno)
        row = []
        col = 1
        for k, tok in enumerate(fields):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"field {k + 1}: {tok.strip()!r} is not a number", source, lineno, col) from None
            if not math.isfinite(v):
                raise ParseError(f"field {k + 1}: non-finite value {tok.strip()!r}", source, lineno, col)
            row.append(v)
            col += len(tok) + 1
        rows.append(row)
    if not rows:
        raise ParseError("no data rows", source, len(lines))
    return SampleSet(np.array(rows), id=sample_id, columns=columns)


def read_samples(path) -> SampleSet:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read sample file: {exc.strerror}", str(path)) from None
    return parse_samples(text, str(path))


def format_samples(samples: SampleSet) -> str:
    cols = samples.columns or tuple(f"x{j + 1}" for j in range(samples.d))
    out = [f"# id: {samples.id}", ",".join(cols)]
    out += [",".join(repr(float(v)) for v in row) for row in samples.data]
    return "\n".join(out) + "\n"


def write_samples(samples: SampleSet, path) -> None:
    Path(path).write_text(format_samples(samples))


# --- spec --------------------------------------------------------------------

_REF = re.compile(r"@([A-Za-z0-9_.\-]+)(?:\[(\d+)\])?$")
_CON_KEY = re.compile(r"constraint\.(\d+)\.(row|rhs|joint|alpha)$")
_TOP_KEYS = {"sense", "n_vars", "objective", "k1", "k2", "samples"}


def _numbers(value, source, lineno):
    try:
        vals = [float(t) for t in value.split(",")]
    except ValueError:
        raise ParseError(f"expected a comma-separated list of numbers, got {value!r}", source, lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite number", source, lineno)
    return vals


def _ref(value, source, lineno):
    m = _REF.match(value)
    if not m:
        return None
    return m.group(1), (int(m.group(2)) if m.group(2) is not None else None)


def parse_spec(text: str, source: str = "<input>", base: Optional[Path] = None):
    """Parse a spec file; returns ``(ProblemSpec, list of sample paths)``."""
    entries = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", source, lineno, 1)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TOP_KEYS and not _CON_KEY.match(key):
            raise ParseError(f"unknown key {key!r}", source, lineno, 1)
        if key in entries:
            raise ParseError(f"duplicate key {key!r} (first on line {lines[key]})", source, lineno, 1)
        entries[key], lines[key] = value, lineno

    def need(key):
        if key not in entries:
            raise ParseError(f"missing required key {key!r}", source)
        return entries[key]

    sense_txt = need("sense").lower()
    sense = {"min": "minimize", "max": "maximize"}.get(sense_txt, sense_txt)
    if sense not in ("minimize", "maximize"):
        raise ParseError(f"sense must be minimize or maximize, got {sense_txt!r}", source, lines["sense"])
    try:
        n_vars = int(need("n_vars"))
    except ValueError:
        raise ParseError("n_vars must be an integer", source, lines["n_vars"]) from None

    obj_txt = need("objective")
    ref = _ref(obj_txt, source, lines["objective"])
    if ref is not None:
        if ref[1] is not None:
            raise ParseError("objective takes a whole sample set, not a column", source, lines["objective"])
        objective = RandomRef(ref[0])
    else:
        objective = FixedVector(np.array(_numbers(obj_txt, source, lines["objective"])))

    def real(key, default):
        if key not in entries:
            return default
        try:
            return float(entries[key])
        except ValueError:
            raise ParseError(f"{key} must be a number", source, lines[key]) from None

    k1 = real("k1", None)
    k2 = real("k2", None)
    if k1 is None and k2 is None:
        k1, k2 = 1.0, 0.0
    elif k2 is None:
        k2 = 1.0 - k1
    elif k1 is None:
        k1 = 1.0 - k2

    groups = {}
    for key, value in entries.items():
        m = _CON_KEY.match(key)
        if m:
            groups.setdefault(int(m.group(1)), {})[m.group(2)] = (value, lines[key])
    if groups and sorted(groups) != list(range(1, len(groups) + 1)):
        raise ParseError(f"constraints must be numbered 1..m without gaps, got {sorted(groups)}", source)

    constraints = []
    for i in sorted(groups):
        g = groups[i]
        alpha = None
        if "alpha" in g:
            try:
                alpha = float(g["alpha"][0])
            except ValueError:
                raise ParseError(f"constraint {i}: alpha must be a number", source, g["alpha"][1]) from None
        if "joint" in g:
            if "row" in g or "rhs" in g:
                raise ParseError(f"constraint {i}: 'joint' excludes 'row' and 'rhs'", source, g["joint"][1])
            ref = _ref(g["joint"][0], source, g["joint"][1])
            if ref is None or ref[1] is not None:
                raise ParseError(f"constraint {i}: joint must be '@id'", source, g["joint"][1])
            constraints.append(ConstraintSpec.joint(ref[0], alpha))
            continue
        for part in ("row", "rhs"):
            if part not in g:
                raise ParseError(f"constraint {i}: missing '{part}'", source)
        row_txt, row_line = g["row"]
        ref = _ref(row_txt, source, row_line)
        if ref is not None:
            if ref[1] is not None:
                raise ParseError(f"constraint {i}: row takes a whole sample set", source, row_line)
            row = RandomRef(ref[0])
        else:
            row = FixedVector(np.array(_numbers(row_txt, source, row_line)))
        rhs_txt, rhs_line = g["rhs"]
        ref = _ref(rhs_txt, source, rhs_line)
        if ref is not None:
            if ref[1] is None or ref[1] < 1:
                raise ParseError(f"constraint {i}: rhs reference needs a 1-based column, e.g. @b[1]", source, rhs_line)
            rhs = ColumnRef(ref[0], ref[1] - 1)
        else:
            vals = _numbers(rhs_txt, source, rhs_line)
            if len(vals) != 1:
                raise ParseError(f"constraint {i}: rhs must be a single number", source, rhs_line)
            rhs = FixedScalar(vals[0])
        constraints.append(ConstraintSpec(row, rhs, alpha))

    paths = []
    if "samples" in entries:
        base = base or Path(".")
        paths = [base / p.strip() for p in entries["samples"].split(",") if p.strip()]
    spec = ProblemSpec(Sense(sense), n_vars, objective, tuple(constraints), k1, k2)
    return spec, paths


def read_spec(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read spec file: {exc.strerror}", str(path)) from None
    return parse_spec(text, str(path), path.parent)


# --- reports -----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    text = str(value)
    if "\n" in text:
        raise ValueError("report values must be single-line")
    return text


def format_report(fields: Mapping) -> str:
    """Render ``key = value`` lines in the mapping's order."""
    out = []
    for key, value in fields.items():
        if not re.fullmatch(r"[A-Za-z0-9_.\[\]-]+", key):
            raise ValueError(f"invalid report key {key!r}")
        out.append(f"{key} = {_fmt(value)}")
    return "\n".join(out) + "\n"


def parse_report(text: str, source: str = "<report>") -> dict:
    """Inverse of :func:`format_report`; values come back as text."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ParseError("expected 'key = value'", source, lineno, 1)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", source, lineno, 1)
        out[key] = value
    return out
