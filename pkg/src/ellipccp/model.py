"""Problem description and the deterministic-program representation.

A :class:`ProblemSpec` declares a stochastic linear program

    min/max  c'x   s.t.  P(a_i'x <= b_i) >= 1 - alpha_i,  x >= 0

where any of ``c``, ``a_i`` and ``b_i`` may be replaced by a reference to a
:class:`SampleSet` of observed draws.  The transforms in
:mod:`ellipccp.transform` turn a validated spec into a
:class:`DeterministicProgram`, a linear objective plus optional second-order
cone terms, which is the only input :mod:`ellipccp.solver` understands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Sense",
    "FixedVector",
    "FixedScalar",
    "RandomRef",
    "ColumnRef",
    "JointRandomRef",
    "ConstraintSpec",
    "ProblemSpec",
    "SampleSet",
    "ConeTerm",
    "ProgramConstraint",
    "DeterministicProgram",
    "Status",
    "Solution",
    "Diagnostic",
    "validate_spec",
]


def _frozen(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class Sense(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


@dataclass(frozen=True)
class FixedVector:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, 1))


@dataclass(frozen=True)
class FixedScalar:
    value: float


@dataclass(frozen=True)
class RandomRef:
    """Whole-vector reference to a sample set (cost vector or a constraint row)."""

    sample_id: str


@dataclass(frozen=True)
class ColumnRef:
    """One column of a sample set, used for a random right-hand side b_i."""

    sample_id: str
    column: int


@dataclass(frozen=True)
class JointRandomRef:
    """Sample set over (a_i, b_i) jointly; columns are the n row entries then b_i."""

    sample_id: str


Row = Union[FixedVector, RandomRef, JointRandomRef]
Rhs = Union[FixedScalar, ColumnRef, JointRandomRef]


@dataclass(frozen=True)
class ConstraintSpec:
    """One chance constraint ``P(a_i'x <= b_i) >= 1 - alpha``.

    A joint constraint carries the same :class:`JointRandomRef` in both
    ``row`` and ``rhs``; use :meth:`joint` to build one.
    """

    row: Row
    rhs: Rhs
    alpha: Optional[float] = None

    @classmethod
    def joint(cls, sample_id: str, alpha: Optional[float] = None) -> "ConstraintSpec":
        ref = JointRandomRef(sample_id)
        return cls(row=ref, rhs=ref, alpha=alpha)

    @property
    def is_joint(self) -> bool:
        return isinstance(self.row, JointRandomRef) or isinstance(self.rhs, JointRandomRef)

    @property
    def is_random(self) -> bool:
        return not (isinstance(self.row, FixedVector) and isinstance(self.rhs, FixedScalar))


@dataclass(frozen=True)
class ProblemSpec:
    sense: Sense
    n_vars: int
    objective: Union[FixedVector, RandomRef]
    constraints: tuple
    k1: float = 1.0
    k2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sense", Sense(self.sense))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def alphas(self) -> tuple:
        return tuple(c.alpha for c in self.constraints)

    def with_weights(self, k1: float, k2: Optional[float] = None) -> "ProblemSpec":
        k2 = 1.0 - k1 if k2 is None else k2
        return ProblemSpec(self.sense, self.n_vars, self.objective, self.constraints, k1, k2)

    def with_alphas(self, alphas: Sequence[float]) -> "ProblemSpec":
        if len(alphas) == 1:
            alphas = list(alphas) * self.m
        if len(alphas) != self.m:
            raise ValueError(f"expected {self.m} alpha values, got {len(alphas)}")
        cons = tuple(
            ConstraintSpec(c.row, c.rhs, float(a)) for c, a in zip(self.constraints, alphas)
        )
        return ProblemSpec(self.sense, self.n_vars, self.objective, cons, self.k1, self.k2)


@dataclass(frozen=True)
class SampleSet:
    """An N x d matrix of draws, one observation per row."""

    data: np.ndarray
    id: str = "sample"
    columns: tuple = ()

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] == 0:
            raise ValueError(f"sample set {self.id!r} must be a non-empty 2-d array")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"sample set {self.id!r} contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        cols = tuple(self.columns) or tuple(f"v{j + 1}" for j in range(data.shape[1]))
        if len(cols) != data.shape[1]:
            raise ValueError(f"sample set {self.id!r}: {len(cols)} column names for {data.shape[1]} columns")
        object.__setattr__(self, "columns", cols)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ConeTerm:
    """``scale * ||root @ y||`` where y is x, or (x, -1) when ``augmented``."""

    scale: float
    root: np.ndarray
    augmented: bool = False

    def __post_init__(self):
        object.__setattr__(self, "root", _frozen(self.root, 2))

    def value(self, x: np.ndarray) -> float:
        return self.scale * float(np.linalg.norm(self.root @ self.lift(x)))

    def lift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.append(x, -1.0) if self.augmented else x


@dataclass(frozen=True)
class ProgramConstraint:
    """``linear @ x + offset + cone(x) <= 0``."""

    linear: np.ndarray
    offset: float
    cone: Optional[ConeTerm] = None

    def __post_init__(self):
        object.__setattr__(self, "linear", _frozen(self.linear, 1))

    def value(self, x: np.ndarray) -> float:
        v = float(self.linear @ x) + self.offset
        if self.cone is not None:
            v += self.cone.value(x)
        return v


@dataclass(frozen=True)
class DeterministicProgram:
    """Linear objective plus optional cone term, subject to cone constraints and x >= 0.

    ``plain_objective`` is the undiscounted cost vector (c-bar or c) used to
    report z alongside the weighted objective Z.  ``quantiles`` holds the
    Student-t percent points used per constraint (None where unused).
    """

    sense: Sense
    linear_objective: np.ndarray
    constraints: tuple
    cone_objective: Optional[ConeTerm] = None
    plain_objective: Optional[np.ndarray] = None
    case: Optional[str] = None
    quantiles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sense", Sense(self.sense))
        object.__setattr__(self, "linear_objective", _frozen(self.linear_objective, 1))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        plain = self.linear_objective if self.plain_objective is None else self.plain_objective
        object.__setattr__(self, "plain_objective", _frozen(plain, 1))
        n = self.n
        for i, con in enumerate(self.constraints):
            if con.linear.shape != (n,):
                raise ValueError(f"constraint {i + 1}: linear part has shape {con.linear.shape}, expected ({n},)")
            if con.cone is not None:
                width = n + 1 if con.cone.augmented else n
                if con.cone.root.shape[1] != width:
                    raise ValueError(f"constraint {i + 1}: cone root has {con.cone.root.shape[1]} columns, expected {width}")
                if con.cone.scale < 0:
                    raise ValueError(f"constraint {i + 1}: negative cone scale makes the constraint nonconvex")
        if self.cone_objective is not None and self.cone_objective.root.shape[1] != n:
            raise ValueError("objective cone root does not match the number of variables")

    @property
    def n(self) -> int:
        return self.linear_objective.shape[0]

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def has_cones(self) -> bool:
        return self.cone_objective is not None or any(c.cone is not None for c in self.constraints)

    def objective(self, x) -> float:
        """Weighted objective Z(x), without smoothing."""
        x = np.asarray(x, dtype=float)
        val = float(self.linear_objective @ x)
        if self.cone_objective is not None:
            val += self.cone_objective.value(x)
        return val

    def plain_value(self, x) -> float:
        return float(self.plain_objective @ np.asarray(x, dtype=float))

    def constraint_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([c.value(x) for c in self.constraints])


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class Solution:
    x: np.ndarray
    z_value: float
    Z_value: float
    status: Status
    max_constraint_violation: float
    kkt_residual: float
    iterations: int = 0
    duals: Optional[np.ndarray] = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    where: str = ""

    def __str__(self) -> str:
        loc = f" [{self.where}]" if self.where else ""
        return f"{self.code}{loc}: {self.message}"


def validate_spec(spec: ProblemSpec, samples: Mapping[str, SampleSet]) -> list:
    """Check a spec against its invariants and resolve every sample reference.

    Returns a list of :class:`Diagnostic`, empty when the spec is usable.
    The order of diagnostics follows the order of the spec's fields.
    """
    out = []

    def diag(code, message, where=""):
        out.append(Diagnostic(code, message, where))

    n = spec.n_vars
    if not isinstance(n, (int, np.integer)) or n < 1:
        diag("N_VARS_INVALID", f"n_vars must be a positive integer, got {n!r}", "n_vars")
        return out

    for name, k in (("k1", spec.k1), ("k2", spec.k2)):
        if not math.isfinite(k) or k < 0 or k > 1:
            diag("WEIGHT_OUT_OF_RANGE", f"{name}={k} must lie in [0, 1]", name)
    if abs(spec.k1 + spec.k2 - 1.0) > 1e-12:
        diag("WEIGHTS_NOT_CONVEX", f"k1 + k2 = {spec.k1 + spec.k2:g}, must equal 1", "k1,k2")

    def resolve(ref_id, where):
        s = samples.get(ref_id)
        if s is None:
            diag("UNKNOWN_SAMPLE_SET", f"no sample set with id {ref_id!r}", where)
            return None
        if s.N < 2:
            diag("SAMPLE_TOO_SMALL", f"sample set {ref_id!r} has N={s.N}; at least 2 draws are needed", where)
        return s

    obj = spec.objective
    if isinstance(obj, FixedVector):
        if obj.values.shape != (n,):
            diag("DIMENSION_MISMATCH", f"cost vector has length {obj.values.size}, expected {n}", "objective")
        elif not np.all(np.isfinite(obj.values)):
            diag("NONFINITE_VALUE", "cost vector has non-finite entries", "objective")
    elif isinstance(obj, RandomRef):
        s = resolve(obj.sample_id, "objective")
        if s is not None and s.d != n:
            diag("DIMENSION_MISMATCH", f"sample set {obj.sample_id!r} has {s.d} columns, expected {n}", "objective")
    else:
        diag("BAD_REFERENCE", f"unsupported objective slot {type(obj).__name__}", "objective")

    for i, con in enumerate(spec.constraints, start=1):
        where = f"constraint.{i}"
        row, rhs = con.row, con.rhs
        if isinstance(row, JointRandomRef) or isinstance(rhs, JointRandomRef):
            if row != rhs:
                diag("JOINT_CONFLICT", "a joint (a_i, b_i) reference excludes separate row/rhs slots", where)
            else:
                s = resolve(row.sample_id, where)
                if s is not None and s.d != n + 1:
                    diag("DIMENSION_MISMATCH", f"joint sample set {row.sample_id!r} has {s.d} columns, expected {n + 1}", where)
        else:
            if isinstance(row, FixedVector):
                if row.values.shape != (n,):
                    diag("DIMENSION_MISMATCH", f"row has length {row.values.size}, expected {n}", where + ".row")
                elif not np.all(np.isfinite(row.values)):
                    diag("NONFINITE_VALUE", "row has non-finite entries", where + ".row")
            elif isinstance(row, RandomRef):
                s = resolve(row.sample_id, where + ".row")
                if s is not None and s.d != n:
                    diag("DIMENSION_MISMATCH", f"sample set {row.sample_id!r} has {s.d} columns, expected {n}", where + ".row")
            else:
                diag("BAD_REFERENCE", f"unsupported row slot {type(row).__name__}", where + ".row")
            if isinstance(rhs, FixedScalar):
                if not math.isfinite(rhs.value):
                    diag("NONFINITE_VALUE", "right-hand side is not finite", where + ".rhs")
            elif isinstance(rhs, ColumnRef):
                s = resolve(rhs.sample_id, where + ".rhs")
                if s is not None and not 0 <= rhs.column < s.d:
                    diag("COLUMN_OUT_OF_RANGE", f"column {rhs.column} outside 0..{s.d - 1} of {rhs.sample_id!r}", where + ".rhs")
            else:
                diag("BAD_REFERENCE", f"unsupported rhs slot {type(rhs).__name__}", where + ".rhs")

        if con.is_random:
            if con.alpha is None:
                diag("ALPHA_MISSING", "random constraint needs a risk level alpha", where + ".alpha")
            elif not (0.0 < con.alpha < 1.0):
                diag("ALPHA_OUT_OF_RANGE", f"alpha={con.alpha} must lie strictly inside (0, 1)", where + ".alpha")
        elif con.alpha is not None and not (0.0 < con.alpha < 1.0):
            diag("ALPHA_OUT_OF_RANGE", f"alpha={con.alpha} must lie strictly inside (0, 1)", where + ".alpha")

    joint_sizes = {
        samples[c.row.sample_id].N
        for c in spec.constraints
        if isinstance(c.row, JointRandomRef) and c.row == c.rhs and c.row.sample_id in samples
    }
    if len(joint_sizes) > 1:
        diag("JOINT_SAMPLE_SIZE_MISMATCH", f"joint sample sets have different sizes {sorted(joint_sizes)}", "constraints")
    return out
