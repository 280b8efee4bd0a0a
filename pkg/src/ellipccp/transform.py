"""Deterministic equivalents of chance-constrained linear programs.

Which slots of the spec are random decides the case:

=====  ==============================================  ======================
case   random slots                                    equivalent
=====  ==============================================  ======================
I      cost vector c                                   mean-dispersion SOCP
II     constraint rows a_i                             SOC constraints
III    right-hand sides b_i                            LP (shifted b)
IV     c and joint (a_i, b_i)                          SOCP over y = (x, -1)
=====  ==============================================  ======================

A spec with nothing random is tagged ``DETERMINISTIC`` and passes straight
through as an LP.  Every other mix is rejected; the pairwise combinations
can be written as case IV with zero-variance samples.

Case IV uses ``y' S*_g y`` as the variance estimate of ``g_i' y``, i.e. the
cone argument is divided by N only.  This reproduces the worked example's
``sqrt((30 x1^2 + 10 x2^2 + 12 x3^2 + 5000) / 25)``; the symbolic formula that
also divides by N - 1 does not.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .elliptical import t_quantile
from .estimators import EstimatorBundle
from .model import (
    ColumnRef,
    ConeTerm,
    DeterministicProgram,
    FixedScalar,
    FixedVector,
    JointRandomRef,
    ProblemSpec,
    ProgramConstraint,
    RandomRef,
    Sense,
)

__all__ = [
    "CaseTag",
    "UnsupportedMixError",
    "covariance_root",
    "detect_case",
    "build_case1",
    "build_case2",
    "build_case3",
    "build_case4",
    "build_deterministic",
    "build_program",
    "pareto_sweep",
]


class CaseTag(str, Enum):
    DETERMINISTIC = "deterministic"
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


class UnsupportedMixError(ValueError):
    code = "UNSUPPORTED_MIX"


def covariance_root(S, rel_tol: float = 1e-10) -> np.ndarray:
    """Root L (r x d) with ``L' L = S``, from a symmetric eigendecomposition.

    Eigenvalues below ``-rel_tol * ||S||`` mean S is not PSD and raise
    ``np.linalg.LinAlgError``; smaller negative ones are clamped to zero and
    zero directions are dropped, so r is the numerical rank (possibly 0).
    Eigenvector signs are fixed so the largest-magnitude entry is positive.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"covariance must be square, got shape {S.shape}")
    S = 0.5 * (S + S.T)
    scale = float(np.max(np.abs(S))) if S.size else 0.0
    if scale == 0.0:
        return np.zeros((0, S.shape[0]))
    w, V = np.linalg.eigh(S)
    if w[0] < -rel_tol * scale:
        raise np.linalg.LinAlgError(f"covariance is not positive semidefinite (eigenvalue {w[0]:.3g})")
    keep = w > rel_tol * scale * 1e-6
    w, V = w[keep], V[:, keep]
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    V = V * signs
    return np.sqrt(w)[:, None] * V.T + 0.0  # + 0.0 clears negative zeros


def detect_case(spec: ProblemSpec) -> CaseTag:
    c_random = isinstance(spec.objective, RandomRef)
    rows = any(isinstance(c.row, RandomRef) for c in spec.constraints)
    rhs = any(isinstance(c.rhs, ColumnRef) for c in spec.constraints)
    joint = any(c.is_joint for c in spec.constraints)

    if joint:
        if rows or rhs:
            raise UnsupportedMixError("joint (a_i, b_i) constraints cannot be mixed with separate random rows or right-hand sides")
        if not c_random:
            raise UnsupportedMixError(
                "joint (a_i, b_i) randomness with a fixed cost vector is not one of the four cases; "
                "supply the cost vector as a zero-variance sample set to use case IV"
            )
        return CaseTag.IV
    flags = (c_random, rows, rhs)
    if sum(flags) > 1:
        names = [n for n, f in zip(("c", "A", "b"), flags) if f]
        raise UnsupportedMixError(
            f"random {' and '.join(names)} is not one of the four cases; "
            "encode it as case IV with zero-variance samples for the fixed parts"
        )
    if c_random:
        return CaseTag.I
    if rows:
        return CaseTag.II
    if rhs:
        return CaseTag.III
    return CaseTag.DETERMINISTIC


def _bundle(estimators: Mapping[str, EstimatorBundle], ref_id: str) -> EstimatorBundle:
    try:
        return estimators[ref_id]
    except KeyError:
        raise KeyError(f"no estimator bundle for sample set {ref_id!r}") from None


def _fixed_constraint(con) -> ProgramConstraint:
    return ProgramConstraint(con.row.values, -float(con.rhs.value))


def _objective(spec, estimators, case):
    """Linear part, optional cone part and plain cost vector of the objective."""
    if isinstance(spec.objective, FixedVector):
        c = np.asarray(spec.objective.values, dtype=float)
        return c, None, c
    est = _bundle(estimators, spec.objective.sample_id)
    c_bar = np.asarray(est.mean, dtype=float)
    k1, k2 = float(spec.k1), float(spec.k2)
    cone = None
    if k2 > 0:
        root = covariance_root(est.unbiased_cov / est.N)
        if root.shape[0] > 0:
            sign = 1.0 if spec.sense is Sense.MINIMIZE else -1.0
            cone = ConeTerm(sign * k2, root)
    return k1 * c_bar, cone, c_bar


def _quantile(df: float, p: float) -> float:
    return t_quantile(df, p)


def _check_alpha(alpha, i):
    if alpha is None or not (0.0 < alpha < 1.0):
        raise ValueError(f"constraint {i}: alpha must lie strictly inside (0, 1), got {alpha}")


def _cone_constraint(mean_row, offset, q, N, cov, augmented, i):
    scale = q / math.sqrt(N)
    if scale < 0:
        raise ValueError(
            f"constraint {i}: alpha > 0.5 gives a negative safety margin and a nonconvex constraint"
        )
    root = covariance_root(cov)
    cone = ConeTerm(scale, root, augmented) if (scale > 0 and root.shape[0] > 0) else None
    return ProgramConstraint(mean_row, offset, cone)


def build_deterministic(spec: ProblemSpec, estimators=None) -> DeterministicProgram:
    c, _, _ = _objective(spec, {}, CaseTag.DETERMINISTIC)
    cons = [_fixed_constraint(con) for con in spec.constraints]
    return DeterministicProgram(spec.sense, c, cons, case=CaseTag.DETERMINISTIC.value,
                                quantiles=(None,) * spec.m)


def build_case1(spec: ProblemSpec, estimators: Mapping[str, EstimatorBundle]) -> DeterministicProgram:
    """Random cost: ``Z = k1 c'x +/- k2 sqrt(x' S*_c x / N_c)`` over fixed constraints."""
    lin, cone, plain = _objective(spec, estimators, CaseTag.I)
    cons = [_fixed_constraint(con) for con in spec.constraints]
    return DeterministicProgram(spec.sense, lin, cons, cone_objective=cone, plain_objective=plain,
                                case=CaseTag.I.value, quantiles=(None,) * spec.m)


def build_case2(spec: ProblemSpec, estimators: Mapping[str, EstimatorBundle]) -> DeterministicProgram:
    """Random rows: ``a_bar'x + eta/sqrt(N) ||root(S*_a) x|| - b <= 0`` with eta the (1-alpha) t point."""
    c, _, _ = _objective(spec, estimators, CaseTag.II)
    cons, qs = [], []
    for i, con in enumerate(spec.constraints, start=1):
        if isinstance(con.row, FixedVector):
            cons.append(_fixed_constraint(con))
            qs.append(None)
            continue
        _check_alpha(con.alpha, i)
        est = _bundle(estimators, con.row.sample_id)
        if est.N < 2:
            raise ValueError(f"constraint {i}: need at least 2 draws, got {est.N}")
        eta = _quantile(est.N - 1, 1.0 - con.alpha)
        cons.append(_cone_constraint(est.mean, -float(con.rhs.value), eta, est.N, est.unbiased_cov, False, i))
        qs.append(eta)
    return DeterministicProgram(spec.sense, c, cons, case=CaseTag.II.value, quantiles=tuple(qs))


def build_case3(spec: ProblemSpec, estimators: Mapping[str, EstimatorBundle]) -> DeterministicProgram:
    """Random right-hand sides: ``a'x - b_bar - delta/sqrt(N_b) s*_b <= 0``, delta the alpha t point.

    The result is a pure LP; for alpha < 0.5, delta < 0 and the shift tightens b.
    """
    c, _, _ = _objective(spec, estimators, CaseTag.III)
    cons, qs = [], []
    for i, con in enumerate(spec.constraints, start=1):
        if isinstance(con.rhs, FixedScalar):
            cons.append(_fixed_constraint(con))
            qs.append(None)
            continue
        _check_alpha(con.alpha, i)
        est = _bundle(estimators, con.rhs.sample_id)
        if est.N < 2:
            raise ValueError(f"constraint {i}: need at least 2 draws, got {est.N}")
        j = con.rhs.column
        b_bar = float(est.mean[j])
        sd = math.sqrt(max(float(est.unbiased_cov[j, j]), 0.0))
        delta = _quantile(est.N - 1, con.alpha)
        offset = -b_bar - delta / math.sqrt(est.N) * sd
        cons.append(ProgramConstraint(con.row.values, offset))
        qs.append(delta)
    return DeterministicProgram(spec.sense, c, cons, case=CaseTag.III.value, quantiles=tuple(qs))


def build_case4(spec: ProblemSpec, estimators: Mapping[str, EstimatorBundle]) -> DeterministicProgram:
    """Random cost and joint (a_i, b_i): ``g_bar'y + tau/sqrt(N) ||root(S*_g) y|| <= 0``, y = (x, -1)."""
    lin, cone, plain = _objective(spec, estimators, CaseTag.IV)
    n = spec.n_vars
    joint_N = {
        _bundle(estimators, con.row.sample_id).N
        for con in spec.constraints
        if isinstance(con.row, JointRandomRef)
    }
    if len(joint_N) > 1:
        raise ValueError(f"joint sample sets must share one size N, got {sorted(joint_N)}")
    cons, qs = [], []
    for i, con in enumerate(spec.constraints, start=1):
        if not isinstance(con.row, JointRandomRef):
            cons.append(_fixed_constraint(con))
            qs.append(None)
            continue
        _check_alpha(con.alpha, i)
        est = _bundle(estimators, con.row.sample_id)
        if est.d != n + 1:
            raise ValueError(f"constraint {i}: joint sample set has {est.d} columns, expected {n + 1}")
        tau = _quantile(est.N - 1, 1.0 - con.alpha)
        g_bar = np.asarray(est.mean, dtype=float)
        cons.append(_cone_constraint(g_bar[:n], -float(g_bar[n]), tau, est.N, est.unbiased_cov, True, i))
        qs.append(tau)
    return DeterministicProgram(spec.sense, lin, cons, cone_objective=cone, plain_objective=plain,
                                case=CaseTag.IV.value, quantiles=tuple(qs))


_BUILDERS = {
    CaseTag.DETERMINISTIC: build_deterministic,
    CaseTag.I: build_case1,
    CaseTag.II: build_case2,
    CaseTag.III: build_case3,
    CaseTag.IV: build_case4,
}


def build_program(spec: ProblemSpec, estimators: Mapping[str, EstimatorBundle]) -> DeterministicProgram:
    return _BUILDERS[detect_case(spec)](spec, estimators)


def pareto_sweep(spec: ProblemSpec, estimators, k1_grid: Sequence[float], options=None) -> list:
    """Solve the weighted-sum scalarisation for each k1 (k2 = 1 - k1), ordered by k1.

    Each entry is ``(k1, Solution)``; solver failures are kept in the list
    rather than stopping the sweep.
    """
    from .solver import solve

    case = detect_case(spec)
    if case not in (CaseTag.I, CaseTag.IV):
        raise ValueError(f"a Pareto sweep needs a random cost vector (case I or IV), got case {case.value}")
    out = []
    for k1 in sorted(float(k) for k in k1_grid):
        if not 0.0 <= k1 <= 1.0:
            raise ValueError(f"k1={k1} outside [0, 1]")
        program = build_program(spec.with_weights(k1, 1.0 - k1), estimators)
        out.append((k1, solve(program, options)))
    return out
