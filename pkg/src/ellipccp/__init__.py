"""Chance-constrained linear programs with elliptically distributed data.

Estimate parameters from samples (:mod:`~ellipccp.estimators`), turn a
:class:`~ellipccp.model.ProblemSpec` into its deterministic equivalent
(:mod:`~ellipccp.transform`), solve it (:mod:`~ellipccp.solver`) and check
the result by simulation (:mod:`~ellipccp.validate`).
"""

__version__ = "0.1.0"

from .estimators import EstimatorBundle, estimate
from .model import (
    ColumnRef,
    ConstraintSpec,
    DeterministicProgram,
    FixedScalar,
    FixedVector,
    JointRandomRef,
    ProblemSpec,
    RandomRef,
    SampleSet,
    Sense,
    Solution,
    Status,
    validate_spec,
)
from .solver import SolverOptions, check_kkt, solve
from .transform import CaseTag, build_program, detect_case, pareto_sweep

__all__ = [
    "__version__",
    "ColumnRef",
    "ConstraintSpec",
    "DeterministicProgram",
    "EstimatorBundle",
    "FixedScalar",
    "FixedVector",
    "JointRandomRef",
    "ProblemSpec",
    "RandomRef",
    "SampleSet",
    "Sense",
    "Solution",
    "SolverOptions",
    "Status",
    "CaseTag",
    "build_program",
    "check_kkt",
    "detect_case",
    "estimate",
    "pareto_sweep",
    "solve",
    "validate_spec",
]
