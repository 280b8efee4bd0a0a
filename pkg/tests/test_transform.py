import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ellipccp.elliptical import t_quantile
from ellipccp.estimators import estimate
from ellipccp.model import (
    ColumnRef,
    ConstraintSpec,
    FixedScalar,
    FixedVector,
    ProblemSpec,
    RandomRef,
    SampleSet,
    Sense,
    Status,
)
from ellipccp.solver import solve
from ellipccp.transform import (
    CaseTag,
    UnsupportedMixError,
    build_case2,
    build_case4,
    build_deterministic,
    build_program,
    covariance_root,
    detect_case,
    pareto_sweep,
)

from conftest import A_ROWS, B_RHS, C_MEAN, bundle

ETA = 2.492159  # printed value; the builders use the full-precision quantile
ETA_FULL = t_quantile(24, 0.99)
points = arrays(float, (3,), elements=st.floats(0.0, 200.0))


def fixed_cons():
    return tuple(ConstraintSpec(FixedVector(r), FixedScalar(b)) for r, b in zip(A_ROWS, B_RHS))


# --- case detection ----------------------------------------------------------


def test_detect_all_cases(example1_det, example1, example2, example3, example4):
    assert detect_case(example1_det[0]) is CaseTag.DETERMINISTIC
    assert detect_case(example1[0]) is CaseTag.I
    assert detect_case(example2[0]) is CaseTag.II
    assert detect_case(example3[0]) is CaseTag.III
    assert detect_case(example4[0]) is CaseTag.IV


@pytest.mark.parametrize("objective, cons", [
    (RandomRef("c"), (ConstraintSpec(FixedVector(A_ROWS[0]), ColumnRef("b", 0), 0.1),)),
    (RandomRef("c"), (ConstraintSpec(RandomRef("a"), FixedScalar(1.0), 0.1),)),
    (FixedVector(C_MEAN), (ConstraintSpec(RandomRef("a"), FixedScalar(1.0), 0.1),
                           ConstraintSpec(FixedVector(A_ROWS[0]), ColumnRef("b", 0), 0.1))),
    (FixedVector(C_MEAN), (ConstraintSpec.joint("g", 0.1),)),
    (RandomRef("c"), (ConstraintSpec.joint("g", 0.1), ConstraintSpec(RandomRef("a"), FixedScalar(1.0), 0.1))),
])
def test_unsupported_mixes(objective, cons):
    spec = ProblemSpec(Sense.MAXIMIZE, 3, objective, cons, 0.5, 0.5)
    with pytest.raises(UnsupportedMixError) as info:
        detect_case(spec)
    assert info.value.code == "UNSUPPORTED_MIX"


# --- coefficients against the hand-written worked examples -------------------


def test_case1_objective_example(example1):
    spec, ests = example1
    prog = build_program(spec, ests)
    for x in ([1.0, 2.0, 3.0], [47.4576, 123.7288, 45.7627], [0.0, 0.0, 5.0]):
        x1, x2, x3 = x
        ref = 0.5 * (50 * x1 + 70 * x2 + 70 * x3) - 0.5 * math.sqrt((450 * x1**2 + 2600 * x2**2 + 850 * x3**2) / 12)
        assert prog.objective(np.array(x)) == pytest.approx(ref, rel=1e-12)


def test_case2_constraints_example(example2):
    spec, ests = example2
    prog = build_program(spec, ests)
    var = [(30, 10, 12), (22, 32, 15), (15, 14, 9)]
    x = np.array([10.0, 20.0, 5.0])
    for con, a, v, b in zip(prog.constraints, A_ROWS, var, B_RHS):
        ref = a @ x + ETA_FULL * math.sqrt(sum(vi * xi**2 for vi, xi in zip(v, x)) / 25) - b
        assert con.value(x) == pytest.approx(ref, rel=1e-12, abs=1e-9)
    assert prog.quantiles == pytest.approx((ETA,) * 3, abs=1e-6)


def test_case3_offsets_example(example3):
    spec, ests = example3
    prog = build_program(spec, ests)
    assert not prog.has_cones
    for con, a, b, v in zip(prog.constraints, A_ROWS, B_RHS, (5000, 4000, 500)):
        assert np.array_equal(con.linear, a)
        # delta is the lower t point (about -ETA), so b is tightened
        assert con.offset == pytest.approx(-b + ETA_FULL * math.sqrt(v / 25), rel=1e-12)


def test_case4_constraints_example(example4):
    spec, ests = example4
    prog = build_program(spec, ests)
    var = [(30, 10, 12, 5000), (22, 32, 15, 4000), (15, 14, 9, 500)]
    x = np.array([40.0, 100.0, 30.0])
    for con, a, v, b in zip(prog.constraints, A_ROWS, var, B_RHS):
        y = np.append(x, 1.0)
        ref = a @ x + ETA_FULL * math.sqrt(float(np.dot(v, y**2)) / 25) - b
        assert con.value(x) == pytest.approx(ref, rel=1e-12, abs=1e-9)
    assert prog.cone_objective is not None and prog.cone_objective.scale == -0.5


# --- reductions --------------------------------------------------------------


def test_case1_k2_zero_is_plain_lp(example1):
    spec, ests = example1
    prog = build_program(spec.with_weights(1.0, 0.0), ests)
    assert not prog.has_cones
    assert np.allclose(prog.linear_objective, C_MEAN)


def test_case1_zero_dispersion():
    spec = ProblemSpec(Sense.MAXIMIZE, 3, RandomRef("c"), fixed_cons(), 0.3, 0.7)
    prog = build_program(spec, {"c": bundle(C_MEAN, np.zeros(3), 12, "c")})
    assert prog.cone_objective is None
    assert np.allclose(prog.linear_objective, 0.3 * C_MEAN)


def test_alpha_half_drops_margin():
    cons = tuple(ConstraintSpec(RandomRef(f"a{i}"), FixedScalar(b), 0.5) for i, b in enumerate(B_RHS))
    spec = ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN), cons)
    ests = {f"a{i}": bundle(A_ROWS[i], [30.0, 10.0, 12.0], 25, f"a{i}") for i in range(3)}
    prog = build_program(spec, ests)
    assert not prog.has_cones
    assert prog.quantiles == (0.0, 0.0, 0.0)


def test_alpha_above_half_rejected():
    spec = ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                       (ConstraintSpec(RandomRef("a"), FixedScalar(1000.0), 0.7),))
    with pytest.raises(ValueError, match="nonconvex"):
        build_program(spec, {"a": bundle(A_ROWS[0], [30.0, 10.0, 12.0], 25, "a")})


def zero_variance_specs():
    det = ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN), fixed_cons())
    c = bundle(C_MEAN, np.zeros(3), 12, "c")
    rows = {f"a{i}": bundle(A_ROWS[i], np.zeros(3), 25, f"a{i}") for i in range(3)}
    joint = {f"g{i}": bundle(np.append(A_ROWS[i], B_RHS[i]), np.zeros(4), 25, f"g{i}") for i in range(3)}
    return det, [
        (ProblemSpec(Sense.MAXIMIZE, 3, RandomRef("c"), fixed_cons(), 0.5, 0.5), {"c": c}, 0.5),
        (ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                     tuple(ConstraintSpec(RandomRef(f"a{i}"), FixedScalar(B_RHS[i]), 0.01) for i in range(3))),
         rows, 1.0),
        (ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                     tuple(ConstraintSpec(FixedVector(A_ROWS[i]), ColumnRef("b", i), 0.01) for i in range(3))),
         {"b": bundle(B_RHS, np.zeros(3), 25, "b")}, 1.0),
        (ProblemSpec(Sense.MAXIMIZE, 3, RandomRef("c"),
                     tuple(ConstraintSpec.joint(f"g{i}", 0.01) for i in range(3)), 0.5, 0.5),
         {"c": c, **joint}, 0.5),
    ]


def test_case_collapse_to_deterministic_lp():
    det, cases = zero_variance_specs()
    ref = build_deterministic(det)
    for spec, ests, k1 in cases:
        prog = build_program(spec, ests)
        assert not prog.has_cones
        assert np.allclose(prog.linear_objective, k1 * ref.linear_objective, rtol=0, atol=1e-12)
        for a, b in zip(prog.constraints, ref.constraints):
            assert np.allclose(a.linear, b.linear, rtol=0, atol=1e-12)
            assert a.offset == pytest.approx(b.offset, abs=1e-12)


def test_case4_reduces_to_case2_without_b_variance():
    rng = np.random.default_rng(8)
    rows, joints = {}, {}
    for i in range(3):
        M = rng.normal(size=(3, 3))
        cov = M @ M.T
        rows[f"a{i}"] = bundle(A_ROWS[i], cov, 25, f"a{i}")
        G = np.zeros((4, 4))
        G[:3, :3] = cov
        joints[f"g{i}"] = bundle(np.append(A_ROWS[i], B_RHS[i]), G, 25, f"g{i}")
    spec2 = ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                        tuple(ConstraintSpec(RandomRef(f"a{i}"), FixedScalar(B_RHS[i]), 0.05) for i in range(3)))
    spec4 = ProblemSpec(Sense.MAXIMIZE, 3, RandomRef("c"),
                        tuple(ConstraintSpec.joint(f"g{i}", 0.05) for i in range(3)), 1.0, 0.0)
    p2 = build_case2(spec2, rows)
    p4 = build_case4(spec4, {"c": bundle(C_MEAN, np.eye(3), 12, "c"), **joints})
    for a, b in zip(p2.constraints, p4.constraints):
        assert np.array_equal(a.linear, b.linear) and a.offset == b.offset
        assert a.cone.scale == b.cone.scale
        # same quadratic form: the augmented root's last column is zero
        assert np.allclose(b.cone.root[:, 3], 0.0, atol=1e-12)
        assert np.allclose(a.cone.root.T @ a.cone.root, b.cone.root[:, :3].T @ b.cone.root[:, :3], atol=1e-10)


def test_case4_needs_common_N():
    spec = ProblemSpec(Sense.MAXIMIZE, 3, RandomRef("c"),
                       (ConstraintSpec.joint("g0", 0.05), ConstraintSpec.joint("g1", 0.05)), 0.5, 0.5)
    ests = {"c": bundle(C_MEAN, np.eye(3), 12, "c"),
            "g0": bundle(np.ones(4), np.eye(4), 25, "g0"), "g1": bundle(np.ones(4), np.eye(4), 20, "g1")}
    with pytest.raises(ValueError, match="share one size"):
        build_program(spec, ests)


# --- properties --------------------------------------------------------------


def test_alpha_monotonicity(example2):
    spec, ests = example2
    z = [solve(build_program(spec.with_alphas([a]), ests)).z_value for a in (0.10, 0.05, 0.01)]
    assert z[0] >= z[1] >= z[2]
    assert z[0] > z[2]


@given(points.filter(lambda x: x.max() > 1e-6), st.sampled_from([0.01, 0.05, 0.2, 0.45]))
def test_safety_margin_is_positive(x, alpha):
    _, ests = test_safety_margin_is_positive.data
    for spec in test_safety_margin_is_positive.specs:
        prog = build_program(spec.with_alphas([alpha]), ests)
        for con in prog.constraints:
            nominal = float(con.linear @ x) + con.offset
            if con.cone is not None:
                assert con.value(x) > nominal
        if prog.case == CaseTag.III.value:
            b_bar = ests["b"].mean
            for con, b in zip(prog.constraints, b_bar):
                assert con.offset > -b


def _margin_setup():
    rng = np.random.default_rng(12)
    samples = {}
    for i in range(3):
        samples[f"a{i}"] = SampleSet(A_ROWS[i] + rng.normal(size=(25, 3)), id=f"a{i}")
        samples[f"g{i}"] = SampleSet(np.append(A_ROWS[i], B_RHS[i]) + rng.normal(size=(25, 4)), id=f"g{i}")
    samples["b"] = SampleSet(B_RHS + rng.normal(size=(25, 3)) * 10, id="b")
    samples["c"] = SampleSet(C_MEAN + rng.normal(size=(12, 3)), id="c")
    ests = {k: estimate(v) for k, v in samples.items()}
    specs = [
        ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                    tuple(ConstraintSpec(RandomRef(f"a{i}"), FixedScalar(B_RHS[i]), 0.1) for i in range(3))),
        ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                    tuple(ConstraintSpec(FixedVector(A_ROWS[i]), ColumnRef("b", i), 0.1) for i in range(3))),
        ProblemSpec(Sense.MAXIMIZE, 3, RandomRef("c"),
                    tuple(ConstraintSpec.joint(f"g{i}", 0.1) for i in range(3)), 0.5, 0.5),
    ]
    return (samples, ests), specs


test_safety_margin_is_positive.data, test_safety_margin_is_positive.specs = _margin_setup()


@given(st.floats(0.01, 100.0), st.integers(0, 2))
def test_scale_consistency(s, i):
    rng = np.random.default_rng(5)
    X = A_ROWS[i] + rng.normal(size=(25, 3)) * [5.0, 3.0, 2.0]
    spec = ProblemSpec(Sense.MAXIMIZE, 3, FixedVector(C_MEAN),
                       (ConstraintSpec(RandomRef("a"), FixedScalar(B_RHS[i]), 0.05),))
    p1 = build_program(spec, {"a": estimate(SampleSet(X, id="a"))})
    ps = build_program(spec, {"a": estimate(SampleSet(s * X, id="a"))})
    c1, cs = p1.constraints[0], ps.constraints[0]
    assert np.allclose(cs.linear, s * c1.linear, rtol=1e-12)
    assert np.allclose(cs.cone.root, s * c1.cone.root, rtol=1e-9, atol=1e-12 * s)


def test_quantiles_use_sample_size(example2):
    spec, ests = example2
    prog = build_program(spec, ests)
    assert prog.quantiles[0] == t_quantile(24, 0.99)


# --- covariance roots --------------------------------------------------------


@given(arrays(float, (4, 3), elements=st.floats(-5, 5)))
def test_covariance_root_reproduces_matrix(M):
    S = M @ M.T
    R = covariance_root(S)
    assert R.shape[1] == 4
    assert np.allclose(R.T @ R, S, atol=1e-9 * max(1.0, np.abs(S).max()))


def test_covariance_root_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        covariance_root(np.diag([1.0, -0.5]))


def test_covariance_root_clamps_rounding_negatives():
    S = np.diag([1.0, -1e-14])
    assert covariance_root(S).shape == (1, 2)


# --- Pareto sweep ------------------------------------------------------------


def test_pareto_empty_grid(example1):
    assert pareto_sweep(*example1, []) == []


def test_pareto_unit_grid_is_deterministic_lp(example1):
    [(k1, sol)] = pareto_sweep(*example1, [1.0])
    assert k1 == 1.0 and sol.status is Status.OPTIMAL
    assert sol.z_value == pytest.approx(14237.2881, abs=1e-2)


def test_pareto_orders_by_k1(example1):
    out = pareto_sweep(*example1, [0.9, 0.1, 0.5])
    assert [k for k, _ in out] == [0.1, 0.5, 0.9]
    Z = [s.Z_value for _, s in out]
    assert Z == sorted(Z)


def test_pareto_rejects_case_without_random_cost(example2):
    with pytest.raises(ValueError, match="case I or IV"):
        pareto_sweep(*example2, [0.5])


def test_pareto_rejects_out_of_range_weight(example1):
    with pytest.raises(ValueError):
        pareto_sweep(*example1, [1.5])
