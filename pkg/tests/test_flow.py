import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transference.flow import (
    FlowError,
    FlowSample,
    PathSpec,
    box_shape,
    build_lattice,
    companion_parameters,
    exact_grid,
    first_minimum_gauges,
    gauges,
    local_minima_of_psi1,
    psi_profile,
    s_grid,
    successive_minima,
    trace_from_csv,
    trace_header,
    trace_to_csv,
)
from transference.problem import ApproximationProblem


def brute_minima(problem, s, radius):
    """Successive minima from every lattice point in the box of the given radius."""
    n, m = problem.n, problem.m
    theta = np.array(problem.as_floats())
    ax, ay = math.exp(s), math.exp(-m * s / n)
    bound = int(math.floor(radius * ax))
    points = []
    for x in itertools.product(range(-bound, bound + 1), repeat=m):
        tx = theta @ np.array(x, dtype=float)
        ranges = [range(math.ceil(v - radius * ay), math.floor(v + radius * ay) + 1) for v in tx]
        for y in itertools.product(*ranges):
            if not any(x) and not any(y):
                continue
            w = np.concatenate([np.array(x) / ax, (np.array(y) - tx) / ay])
            points.append((float(np.abs(w).max()), w))
    points.sort(key=lambda t: t[0])
    chosen, lambdas = [], []
    for norm, w in points:
        trial = chosen + [w]
        if np.linalg.matrix_rank(np.array(trial), tol=1e-9) == len(trial):
            chosen.append(w)
            lambdas.append(norm)
            if len(chosen) == problem.d:
                break
    return lambdas


def test_lattice_is_unimodular():
    problem = ApproximationProblem.from_rows([["1/2", "3/7"], ["-2/5", "1/9"]], exact=True)
    assert build_lattice(problem).determinant == 1
    assert build_lattice(problem, transposed=True).determinant == 1
    zero = build_lattice(ApproximationProblem.zero(2, 1))
    assert zero.basis == tuple(tuple(Fraction(int(i == j)) for j in range(3)) for i in range(3))


def test_lattice_image():
    problem = ApproximationProblem.from_rows([["1/2"], ["1/3"]], exact=True)
    assert build_lattice(problem).image((6, 3, 2)) == (6, 0, 0)


def test_box_shape():
    path = PathSpec.standard(2, 1)
    assert np.allclose(box_shape(path, 0.0), 1.0)
    s = 1.7
    assert np.allclose(box_shape(path, s), [math.exp(s), math.exp(-s / 2), math.exp(-s / 2)], rtol=1e-15)
    assert math.isclose(float(np.prod(box_shape(PathSpec.standard(2, 3), 4.0))), 1.0, rel_tol=1e-12)
    with pytest.raises(FlowError):
        box_shape(path, 1e4)


def test_path_slopes_must_balance():
    with pytest.raises(ValueError):
        PathSpec((1.0, -0.4, -0.4))


def test_unit_cube():
    res = successive_minima(ApproximationProblem.zero(2, 1), 0.0)
    assert res.lambdas == (1.0, 1.0, 1.0)
    assert sorted(res.witnesses) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


@pytest.mark.parametrize("s", [0.5, 1.0, 5.0, 20.0])
def test_zero_matrix_closed_form(s):
    res = successive_minima(ApproximationProblem.zero(2, 1), s)
    expected = (math.exp(-s), math.exp(s / 2), math.exp(s / 2))
    for got, want in zip(res.lambdas, expected):
        assert abs(got - want) <= 1e-12 * want
    assert res.witnesses[0] == (1, 0, 0)


@settings(max_examples=15, deadline=None)
@given(
    st.sampled_from([(2, 1), (1, 2), (2, 2)]),
    st.integers(0, 10**6),
    st.floats(0.2, 3.0),
)
def test_minima_match_brute_force(shape, seed, s):
    import random

    n, m = shape
    rng = random.Random(seed)
    rows = [[Fraction(rng.getrandbits(40), 1 << 40) for _ in range(m)] for _ in range(n)]
    problem = ApproximationProblem(tuple(tuple(r) for r in rows))
    got = successive_minima(problem, s).lambdas
    want = brute_minima(problem, s, 1.01 * got[-1])
    assert len(want) == problem.d
    for a, b in zip(got, want):
        assert abs(a - b) <= 1e-9 * b


def test_witnesses_realise_minima(random_2x1):
    res = successive_minima(random_2x1, 4.0)
    for lam, z in zip(res.lambdas, res.witnesses):
        mu, nu = gauges(random_2x1, 4.0, z)
        assert abs(max(mu, nu) - lam) <= 1e-12 * lam
    assert abs(round(np.linalg.det(np.array(res.witnesses, dtype=float)))) >= 1


def test_minkowski_bounds(random_2x1, random_1x2):
    for problem in (random_2x1, random_1x2):
        d = problem.d
        for smp in psi_profile(problem, s_grid(12.0, 0.5)):
            prod = math.prod(smp.lambdas)
            assert 1 / math.factorial(d) - 1e-9 <= prod <= 1 + 1e-9
            assert list(smp.lambdas) == sorted(smp.lambdas)


def test_rational_witness(rational_column):
    trace = psi_profile(rational_column, [10.0, 20.0, 30.0])
    last = trace[-1]
    assert last.witnesses[0] == (6, 3, 2)
    assert math.isclose(last.lambdas[0], 6 * math.exp(-30.0), rel_tol=1e-12)
    assert math.isclose(last.psis[0], -1 + math.log(6) / 30, rel_tol=1e-12)
    assert [smp.psis[0] for smp in trace] == sorted((smp.psis[0] for smp in trace), reverse=True)


def test_first_minimum_gauges_zero():
    problem = ApproximationProblem.zero(2, 1)
    res = successive_minima(problem, 1.0)
    g = first_minimum_gauges(FlowSample(1.0, res.lambdas, res.witnesses), problem)
    assert math.isclose(g.mu, math.exp(-1), rel_tol=1e-15)
    assert g.nu == 0
    assert math.isclose(g.lam, math.exp(-1), rel_tol=1e-12)


def test_psi_profile_rejects_bad_grids():
    problem = ApproximationProblem.zero(2, 1)
    with pytest.raises(FlowError):
        psi_profile(problem, [0.0, 1.0])
    with pytest.raises(FlowError):
        psi_profile(problem, [2.0, 1.0])


def test_grids():
    assert s_grid(1.0, 0.25) == [0.25, 0.5, 0.75, 1.0]
    assert s_grid(1.0, 0.3)[-1] == 1.0
    grid = exact_grid(2, 2, 4)
    assert grid == [2 * math.log(u) for u in (2, 3, 4)]


def test_local_minima_zero_matrix():
    problem = ApproximationProblem.zero(2, 1)
    assert local_minima_of_psi1(psi_profile(problem, s_grid(5.0, 0.5)), problem) == []


def test_local_minima_are_balanced(random_2x1):
    trace = psi_profile(random_2x1, s_grid(10.0, 0.05))
    minima = local_minima_of_psi1(trace, random_2x1)
    assert minima
    for s in minima:
        res = successive_minima(random_2x1, s)
        mu, nu = gauges(random_2x1, s, res.witnesses[0])
        lam = res.lambdas[0]
        assert abs(mu - nu) <= 1e-9 * lam
        assert abs(max(mu, nu) - lam) <= 1e-9 * lam


def test_companion_bounds(random_2x1):
    problem = random_2x1
    n, m = problem.n, problem.m
    trace = psi_profile(problem, s_grid(10.0, 0.05))
    for s in local_minima_of_psi1(trace, problem)[-3:]:
        res = successive_minima(problem, s)
        psi1 = math.log(res.lambdas[0]) / s
        shrink = companion_parameters(problem, s, "shrink", res)
        assert s * (1 + psi1) - 1e-9 <= shrink.s_companion <= s + 1e-9
        grow = companion_parameters(problem, s, "grow", res)
        assert s - 1e-9 <= grow.s_companion <= s * (1 - n / m * psi1) + 1e-9
        for pair in (shrink, grow):
            assert math.isclose(pair.check_lambda_1, pair.check_lambda_2, rel_tol=1e-8)


def test_companion_side_validation():
    problem = ApproximationProblem.zero(2, 1)
    with pytest.raises(ValueError):
        companion_parameters(problem, 1.0, "sideways")
    # e_1 has nu = 0 < lambda_1, so the grow side does not apply
    with pytest.raises(FlowError):
        companion_parameters(problem, 1.0, "grow")


def test_csv_round_trip(random_1x2):
    trace = psi_profile(random_1x2, s_grid(2.0, 0.5))
    text = trace_to_csv(trace)
    assert text.splitlines()[0].split(",") == trace_header(3)
    rows = trace_from_csv(text)
    assert len(rows) == len(trace)
    for row, smp in zip(rows, trace):
        assert math.isclose(row["lambda_1"], smp.lambdas[0], rel_tol=1e-14)
        assert math.isclose(row["Psi_3"], smp.Psis[2], rel_tol=1e-12, abs_tol=1e-14)
    assert trace_to_csv(psi_profile(random_1x2, s_grid(2.0, 0.5))) == text
