from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from fairncut.errors import BadShape
from fairncut.fairness import bounds_from_sigma
from fairncut.graph import GroupAssignment
from fairncut.lp import LpProblem, LpStatus, build_lp1, certify, solve_lp, to_lp_text
from fairncut.rounding import cost_matrix
from oracles import brute_force_fair_assignment, random_groups, vertex_enumeration_lp

METHODS = ["highs", "simplex"]


def lp(c, A, sense, rhs, lo=0.0, hi=10.0):
    return LpProblem(np.array(c, float), sp.csr_array(np.array(A, float)), np.array(sense, object),
                     np.array(rhs, float), lo, hi)


def random_box_lp(rng):
    nv = int(rng.integers(1, 4))
    nr = int(rng.integers(1, 4))
    A = rng.integers(-3, 4, (nr, nv)).astype(float)
    x0 = rng.uniform(0, 2, nv)
    sense = rng.choice(["<=", ">=", "="], nr)
    # build the rhs around a known point so most instances are feasible
    rhs = A @ x0 + np.where(sense == "<=", 1.0, np.where(sense == ">=", -1.0, 0.0))
    rhs = np.round(rhs, 3)
    return lp(rng.integers(-5, 6, nv), A, sense, rhs, 0.0, 3.0)


def assert_certified(sol, tol_res=1e-8, tol_gap=1e-6):
    assert sol.status is LpStatus.OPTIMAL
    assert sol.residual <= tol_res
    assert sol.gap <= tol_gap


@pytest.mark.parametrize("method", METHODS)
class TestSmallLps:
    def test_lower_bound_row(self, method):
        sol = solve_lp(lp([1], [[1]], [">="], [3]), method)
        assert_certified(sol)
        assert sol.objective == pytest.approx(3.0)

    def test_equality(self, method):
        sol = solve_lp(lp([1, 1], [[1, 1]], ["="], [1]), method)
        assert_certified(sol)
        assert sol.objective == pytest.approx(1.0)

    def test_upper_bound_binds(self, method):
        sol = solve_lp(lp([-1, -2], [[1, 1]], ["<="], [4], 0.0, 3.0), method)
        assert_certified(sol)
        assert sol.objective == pytest.approx(-7.0)
        np.testing.assert_allclose(sol.x, [1, 3], atol=1e-9)

    def test_infeasible_has_witness(self, method):
        sol = solve_lp(lp([1], [[1], [1]], [">=", "<="], [5, 2]), method)
        assert sol.status is LpStatus.INFEASIBLE
        assert sol.witness

    def test_matches_vertex_enumeration(self, method):
        rng = np.random.default_rng(5)
        compared = 0
        for _ in range(200):
            p = random_box_lp(rng)
            want = vertex_enumeration_lp(p.c, p.A.toarray(), p.sense, p.rhs, p.lo, p.hi)
            sol = solve_lp(p, method)
            if want is None:
                assert sol.status is LpStatus.INFEASIBLE
                continue
            assert_certified(sol)
            assert sol.objective == pytest.approx(want, abs=1e-7)
            compared += 1
        assert compared > 100


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_lp(lp([1], [[1]], [">="], [0]), "ellipsoid")


class TestProblemValidation:
    def test_shape_mismatch(self):
        with pytest.raises(BadShape):
            lp([1, 2], [[1]], ["="], [1])

    def test_bad_sense(self):
        with pytest.raises(BadShape):
            lp([1], [[1]], ["<"], [1])

    def test_infinite_bounds(self):
        with pytest.raises(BadShape):
            lp([1], [[1]], ["="], [1], 0.0, np.inf)

    def test_residual(self):
        p = lp([1, 1], [[1, 1], [1, -1]], ["<=", "="], [1, 0], 0.0, 1.0)
        assert p.residual(np.array([0.5, 0.5])) == 0.0
        assert p.residual(np.array([1.0, 0.5])) == pytest.approx(0.5)


def test_certify_bound_is_valid_for_any_duals(rng):
    p = lp([1, 2], [[1, 1]], [">="], [1], 0.0, 1.0)
    for _ in range(20):
        _, dual, _ = certify(p, np.array([1.0, 0.0]), rng.standard_normal(1))
        assert dual <= 1.0 + 1e-12


def small_lp1_instance(rng, n, k, m, sigma):
    H = rng.standard_normal((n, 2))
    Q = rng.standard_normal((k, 2))
    ga = random_groups(rng, n, m)
    return cost_matrix(H, Q), ga, bounds_from_sigma(ga, sigma)


class TestLp1:
    def test_row_counts(self):
        ga = GroupAssignment.from_labels([0, 0, 1, 1])
        p = build_lp1(np.ones((4, 2)), ga, bounds_from_sigma(ga, Fraction(1, 5)))
        assert p.num_vars == 8
        assert p.row_counts() == {"=": 4, ">=": 2 + 4, "<=": 4}
        assert p.num_rows == 4 + 2 + 8

    def test_uniform_assignment_is_feasible(self, rng):
        C, ga, fb = small_lp1_instance(rng, 12, 3, 3, Fraction(1, 5))
        p = build_lp1(C, ga, fb)
        assert p.residual(np.full(12 * 3, 1 / 3)) <= 1e-12

    def test_mirror_instance(self):
        # each group sits on its own center; equal shares force every unit of
        # group 0 kept home to be matched by a unit of group 1 sent away
        ga = GroupAssignment.from_labels([0, 0, 1, 1])
        C = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
        sol = solve_lp(build_lp1(C, ga, bounds_from_sigma(ga, 0)))
        assert_certified(sol)
        assert sol.objective == pytest.approx(2.0)
        S = sol.x.reshape(4, 2)
        np.testing.assert_allclose(S[:2].sum(0), S[2:].sum(0), atol=1e-9)

    def test_bad_shapes(self):
        ga = GroupAssignment.from_labels([0, 1, 0])
        fb = bounds_from_sigma(ga, 0.5)
        with pytest.raises(BadShape):
            build_lp1(np.ones((4, 2)), ga, fb)
        with pytest.raises(BadShape):
            build_lp1(np.ones((3, 4)), ga, fb)

    @pytest.mark.parametrize("method", METHODS)
    def test_lower_bounds_integral_optimum(self, method):
        rng = np.random.default_rng(21)
        checked = 0
        for trial in range(40):
            n = int(rng.integers(3, 9))
            k = int(rng.integers(2, 4 if n <= 7 else 3))
            sigma = [Fraction(1, 5), Fraction(1, 2), Fraction(4, 5)][trial % 3]
            C, ga, fb = small_lp1_instance(rng, n, k, 2, sigma)
            sol = solve_lp(build_lp1(C, ga, fb), method)
            want = brute_force_fair_assignment(C, ga, fb)
            if sol.status is LpStatus.INFEASIBLE:
                assert want is None
                continue
            assert_certified(sol)
            if want is not None:
                assert sol.objective <= want + 1e-9
                checked += 1
        assert checked >= 10

    def test_backends_agree(self, rng):
        for _ in range(10):
            C, ga, fb = small_lp1_instance(rng, 15, 3, 2, Fraction(1, 2))
            p = build_lp1(C, ga, fb)
            a, b = solve_lp(p, "highs"), solve_lp(p, "simplex")
            assert_certified(a)
            assert_certified(b)
            assert a.objective == pytest.approx(b.objective, rel=1e-8, abs=1e-9)

    def test_deterministic(self, rng):
        C, ga, fb = small_lp1_instance(rng, 40, 4, 3, Fraction(1, 5))
        p = build_lp1(C, ga, fb)
        np.testing.assert_array_equal(solve_lp(p).x, solve_lp(p).x)


def test_lp_text_format():
    p = lp([1, -2], [[1, 1]], ["<="], [4], 0.0, 3.0)
    text = to_lp_text(p)
    assert text.splitlines()[1] == "Minimize"
    assert " r0: + 1 x0 + 1 x1 <= 4" in text
    assert " 0 <= x1 <= 3" in text
    assert text.rstrip().endswith("End")
