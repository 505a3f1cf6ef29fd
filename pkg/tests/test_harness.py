import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transference.exponents import INF, ExponentReport, diophantine_from_schmidt
from transference.fixtures import FixtureSpec, generate
from transference.flow import psi_profile, s_grid
from transference.harness import (
    EXPONENT_FAMILIES,
    HOLDS,
    HYPOTHESIS_FAILED,
    REGISTRY,
    VACUOUS,
    VIOLATED,
    WITHIN,
    ExponentBundle,
    HarnessError,
    SolutionSpace,
    SuiteConfig,
    SuiteResult,
    check_hypothesis_solution_space,
    evaluate_inequality,
    ext_eval,
    flow_horizons,
    integer_kernel,
    make_report,
    pointwise_suite,
    run_suite,
    suite_table,
    suite_to_json,
)
from transference.problem import ApproximationProblem

from conftest import load_schema

FAST = SuiteConfig(s_max=8.0, s_step=0.1, t_max=2000, companion_limit=2)


def bundle_from_psi(n, m, lower, upper, star_lower, star_upper, solutions=None):
    """Exponent bundle from Schmidt exponents given per grade (dicts p -> value)."""
    def reports(lo, hi, nn, mm, starred):
        out = {}
        for p in lo:
            beta, alpha = diophantine_from_schmidt(p, lo[p], hi[p], nn, mm)
            out[p] = ExponentReport(p, "schmidt-route", beta, alpha, lo[p], hi[p], transposed=starred)
        return out

    return ExponentBundle(n, m, reports(lower, upper, n, m, False), reports(star_lower, star_upper, m, n, True),
                          solutions)


def generic_bundle(n, m):
    zeros = {p: 0.0 for p in range(1, n + m)}
    return bundle_from_psi(n, m, zeros, zeros, zeros, zeros, SolutionSpace(0, [], False))


def test_kernel_examples(rational_column):
    zero = check_hypothesis_solution_space(ApproximationProblem.zero(2, 3))
    assert zero.rank == 3 and zero.certified and zero.hypothesis_ok
    sol = check_hypothesis_solution_space(rational_column)
    assert sol.rank == 1 and not sol.hypothesis_ok
    assert [tuple(abs(v) for v in b) for b in sol.basis] == [(6, 3, 2)]


def test_kernel_vectors_solve_the_system():
    rows = [[3, 5, -2, 7], [1, -4, 6, 0]]
    kernel = integer_kernel(rows)
    assert len(kernel) == 2
    for v in kernel:
        assert all(sum(a * b for a, b in zip(row, v)) == 0 for row in rows)


def test_real_matrix_rank_zero(random_2x1):
    sol = check_hypothesis_solution_space(random_2x1, search_points=10**5)
    assert sol.rank == 0 and not sol.certified and sol.caveat


def test_generic_dyson_equality():
    for n, m in ((2, 1), (1, 2), (2, 2), (3, 1)):
        (rep,) = evaluate_inequality("dyson", generic_bundle(n, m))
        assert rep.margin == pytest.approx(0.0, abs=1e-12)
        assert rep.verdict == HOLDS


def test_generic_jarnik():
    (rep,) = evaluate_inequality("jarnik_eq", generic_bundle(1, 2))
    assert rep.lhs == pytest.approx(1.0)
    assert rep.margin == pytest.approx(0.0, abs=1e-12)
    assert rep.verdict == HOLDS
    (other,) = evaluate_inequality("jarnik_eq", generic_bundle(2, 1))
    assert other.verdict == VACUOUS


def test_thm5_zero_upper_exponent():
    (rep,) = evaluate_inequality("thm5", generic_bundle(2, 1))
    assert rep.rhs == 0.0 and rep.lhs == 0.0
    assert rep.verdict == HOLDS


def test_generic_values_never_violate():
    for n, m in ((2, 1), (1, 2), (2, 2), (3, 1), (1, 3)):
        bundle = generic_bundle(n, m)
        for name in EXPONENT_FAMILIES:
            for rep in evaluate_inequality(name, bundle):
                assert rep.verdict in (HOLDS, VACUOUS), (n, m, rep)


def test_missing_inputs():
    bundle = ExponentBundle(2, 1, {}, {})
    with pytest.raises(HarnessError, match="missing"):
        evaluate_inequality("dyson", bundle)
    with pytest.raises(HarnessError):
        evaluate_inequality("not_a_family", generic_bundle(2, 1))


def test_rational_hypothesis_failure(rational_column):
    sol = check_hypothesis_solution_space(rational_column)
    lim = {1: -1.0, 2: -0.5}
    star = {1: -1.0, 2: -2.0}
    bundle = bundle_from_psi(2, 1, lim, lim, star, star, sol)
    (rep,) = evaluate_inequality("thm2", bundle)
    assert rep.name == "thm2_m1" and rep.verdict == HYPOTHESIS_FAILED


def test_ext_eval():
    assert ext_eval(lambda x: x + 1, 2.0) == 3.0
    assert ext_eval(lambda x: 1 / x, INF) == pytest.approx(0.0, abs=1e-5)
    assert ext_eval(lambda x: 2 * x + 1, INF) == INF
    assert ext_eval(lambda x: -x, INF) == -INF
    assert ext_eval(lambda x: (x + 1) / (x + 2), INF) == pytest.approx(1.0)
    # infinite arguments move together, so x - y tends to 0 along the diagonal
    assert ext_eval(lambda x, y: x - y, INF, INF) == 0.0
    assert math.isnan(ext_eval(lambda x: x % 7, INF))
    assert math.isnan(ext_eval(lambda x: 1 / x, 0.0))
    assert math.isnan(ext_eval(lambda x: x, math.nan))


def test_verdicts():
    assert make_report("f", "a", 1.0, ">=", 1.0, 0.05).verdict == HOLDS
    assert make_report("f", "a", 0.97, ">=", 1.0, 0.05).verdict == WITHIN
    assert make_report("f", "a", 0.9, ">=", 1.0, 0.05).verdict == VIOLATED
    assert make_report("f", "a", 0.9, "<=", 1.0, 0.05).verdict == HOLDS
    assert make_report("f", "a", 0.9, ">=", 1.0, 0.05, hypothesis_ok=False).verdict == HYPOTHESIS_FAILED
    assert make_report("f", "a", 0.9, ">=", 1.0, 0.05, guard=False, hypothesis_ok=False).verdict == VACUOUS
    assert make_report("f", "a", math.nan, ">=", 1.0, 0.05).verdict == VACUOUS
    assert make_report("f", "a", 2.0, ">=", 1.0, 0.05, trivial=1.5).verdict == VACUOUS
    assert make_report("f", "a", 2.0, ">=", 1.5, 0.05, trivial=1.5).verdict == HOLDS
    assert make_report("f", "a", INF, "==", INF, 0.05).verdict == HOLDS
    assert make_report("f", "a", INF, ">=", 3.0, 0.05).verdict == HOLDS


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.001, 1))
def test_verdict_ordering(lhs, rhs, tol):
    verdict = make_report("f", "a", lhs, ">=", rhs, tol).verdict
    if lhs >= rhs:
        assert verdict == HOLDS
    elif lhs - rhs < -tol:
        assert verdict == VIOLATED
    else:
        assert verdict in (HOLDS, WITHIN)


def test_pointwise_zero_matrix():
    problem = ApproximationProblem.zero(2, 1)
    trace = psi_profile(problem, s_grid(6.0, 0.5))
    reports = {r.family: r for r in pointwise_suite(trace, problem, companion_limit=0)}
    psand = reports["psi_sandwich"]
    assert psand.verdict == HOLDS
    assert psand.margin == pytest.approx(0.0, abs=1e-12)
    for family in ("lambda_order", "minkowski_product", "minkowski_decay", "sandwich"):
        assert reports[family].verdict == HOLDS


def test_pointwise_random(random_2x1):
    trace = psi_profile(random_2x1, s_grid(10.0, 0.05))
    reports = pointwise_suite(trace, random_2x1, SolutionSpace(0, [], False), (5.0, 10.0), companion_limit=3)
    assert {r.family for r in reports} >= {"lemma1", "companion_bounds", "divergence"}
    for rep in reports:
        assert rep.verdict in (HOLDS, VACUOUS), rep


def test_flow_horizons():
    assert flow_horizons(2, 1, 25.0) == (25.0, 12.5)
    assert flow_horizons(1, 2, 25.0) == (12.5, 25.0)


@pytest.fixture(scope="module")
def zero_suite():
    return run_suite(ApproximationProblem.zero(2, 2), FAST)


def test_zero_matrix_suite(zero_suite):
    assert zero_suite.solutions.rank == 2 and zero_suite.solutions.hypothesis_ok
    schmidt = [r for r in zero_suite.exponents if r.method == "schmidt-route"]
    assert schmidt and all(r.beta == INF and r.alpha == INF for r in schmidt)
    assert not zero_suite.violated
    thm2 = [r for r in zero_suite.inequalities if r.family in ("thm2", "thm4")]
    assert thm2 and all(r.hypothesis_ok for r in thm2)
    assert {r.family for r in zero_suite.inequalities} == set(REGISTRY)


def test_suite_json_round_trip(zero_suite):
    text = json.dumps(zero_suite.to_json())
    back = SuiteResult.from_json(json.loads(text))
    assert json.dumps(back.to_json()) == text


def test_suite_json_schema(zero_suite):
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(json.loads(suite_to_json([zero_suite])), load_schema("suite.schema.json"))
    assert suite_table([zero_suite]).count("\n") == len(zero_suite.inequalities) + 2


def test_only_filter(random_1x2):
    config = SuiteConfig(s_max=8.0, s_step=0.1, t_max=500, only=("jarnik_eq",))
    res = run_suite(random_1x2, config)
    assert [r.name for r in res.inequalities] == ["jarnik_eq"]
    with pytest.raises(HarnessError):
        run_suite(random_1x2, SuiteConfig(s_max=8.0, s_step=0.1, t_max=500, only=("no_such_check",)))


def test_corrupted_order_is_caught():
    problem = generate(FixtureSpec("random-uniform", 2, 1, seed=3))
    config = SuiteConfig(s_max=6.0, s_step=0.1, t_max=500, only=("lambda_order",), corrupt_lambda_order=True)
    res = run_suite(problem, config)
    assert res.violated
    assert res.inequalities[0].verdict == VIOLATED
