from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairncut.embedding import EmbeddingConfig, fair_spectral_embedding
from fairncut.errors import BadShape, Ip2Infeasible
from fairncut.fairness import bounds_from_sigma, counts_are_fair, is_fair
from fairncut.graph import GroupAssignment, PartitionState, ncut
from fairncut.lp import build_lp1, solve_lp
from fairncut.rounding import (ReassignmentPlan, RoundingConfig, cost_matrix, fair_rounding,
                               kmeanspp_init, nearest_assignment, reassign_to_fair,
                               round_assignment, solve_ip2)
from oracles import (bounds_for_rows, brute_force_ip2, ip2_instances, random_connected_graph,
                     random_groups, random_labels, two_triangles)


class TestCostMatrix:
    def test_hand_value(self):
        assert cost_matrix(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))[0, 0] == 5.0

    def test_matches_loops(self, rng):
        H, Q = rng.standard_normal((20, 3)), rng.standard_normal((4, 3))
        want = np.array([[np.sqrt(((h - q) ** 2).sum()) for q in Q] for h in H])
        np.testing.assert_allclose(cost_matrix(H, Q), want, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(BadShape):
            cost_matrix(np.zeros((2, 3)), np.zeros((2, 2)))


class TestTies:
    def test_nearest_prefers_lower_index(self):
        assert nearest_assignment(np.array([[0.0]]), np.array([[1.0], [-1.0]]))[0] == 0

    def test_round_prefers_lower_index(self):
        assert round_assignment(np.array([[0.5, 0.5], [0.2, 0.8]])).tolist() == [0, 1]


class TestKmeans:
    def test_identical_points(self):
        cs = kmeanspp_init(np.ones((10, 2)), 3, seed=0)
        np.testing.assert_allclose(cs.Q, np.ones((3, 2)))

    def test_n_equals_k_picks_every_point(self, rng):
        H = rng.standard_normal((4, 2))
        Q = kmeanspp_init(H, 4, seed=1).Q
        assert sorted(map(tuple, Q)) == sorted(map(tuple, H))

    def test_separated_blobs(self, rng):
        H = np.vstack([rng.normal(c, 0.05, (30, 2)) for c in ([0, 0], [5, 0], [0, 5])])
        Q = kmeanspp_init(H, 3, seed=0, n_init=5).Q
        found = sorted(tuple(np.round(q).astype(int)) for q in Q)
        assert found == [(0, 0), (0, 5), (5, 0)]

    def test_seeded(self, rng):
        H = rng.standard_normal((50, 3))
        np.testing.assert_array_equal(kmeanspp_init(H, 4, 7, n_init=3).Q,
                                      kmeanspp_init(H, 4, 7, n_init=3).Q)

    def test_too_few_points(self):
        with pytest.raises(BadShape):
            kmeanspp_init(np.zeros((2, 2)), 3)


class TestIp2:
    def test_worked_instance(self):
        N = np.array([[4, 0], [0, 4]])
        fb = bounds_for_rows(N, Fraction(1, 5))
        plan = solve_ip2(N, fb)
        assert plan.objective == 8
        assert plan.moves == 4
        assert counts_are_fair(plan.N_target, fb)

    def test_already_fair_is_identity(self):
        N = np.array([[2, 2], [2, 2]])
        plan = solve_ip2(N, bounds_for_rows(N, Fraction(1, 5)))
        assert plan.method == "identity" and plan.objective == 0

    def test_infeasible(self):
        # one node of group 1 cannot be shared by two clusters at sigma = 0
        N = np.array([[1, 1], [1, 0]])
        with pytest.raises(Ip2Infeasible):
            solve_ip2(N, bounds_for_rows(N, 0))

    def test_empty_cluster_rejected(self):
        N = np.array([[3, 0], [3, 0]])
        with pytest.raises(BadShape):
            solve_ip2(N, bounds_for_rows(N, Fraction(1, 2)))

    def test_exact_matches_brute_force(self):
        for N, sigma in ip2_instances(150, seed=1):
            fb = bounds_for_rows(N, sigma)
            want = brute_force_ip2(N, fb)
            if want is None:
                with pytest.raises(Ip2Infeasible):
                    solve_ip2(N, fb, method="exact")
                continue
            plan = solve_ip2(N, fb, method="exact")
            assert plan.objective == want, (N, sigma)
            assert counts_are_fair(plan.N_target, fb)
            assert np.array_equal(plan.N_target.sum(1), N.sum(1))

    def test_hill_matches_exact(self):
        for N, sigma in ip2_instances(150, seed=2):
            fb = bounds_for_rows(N, sigma)
            try:
                exact = solve_ip2(N, fb, method="exact")
            except Ip2Infeasible:
                continue
            hill = solve_ip2(N, fb, method="hill", seed=0)
            assert hill.method in ("hill", "identity")
            assert hill.objective == exact.objective, (N, sigma)

    def test_hill_on_larger_shape(self, rng):
        N = rng.integers(5, 40, (4, 6))
        fb = bounds_for_rows(N, Fraction(1, 5))
        exact = solve_ip2(N, fb, method="exact")
        hill = solve_ip2(N, fb, method="hill")
        assert hill.method == "hill"
        assert hill.objective == exact.objective

    def test_objective_is_twice_moves(self):
        for N, sigma in ip2_instances(40, seed=3):
            try:
                plan = solve_ip2(N, bounds_for_rows(N, sigma))
            except Ip2Infeasible:
                continue
            assert plan.objective == 2 * plan.moves


def planted_instance(rng, n, k, m):
    g = random_connected_graph(rng, n)
    ga = random_groups(rng, n, m)
    return g, ga


def test_loose_lp_matches_nearest_center_cost(rng):
    # at sigma = 1 the fairness rows are vacuous; with every center nearest to
    # some point the mass rows are slack too
    H = np.vstack([rng.normal(c, 0.1, (10, 2)) for c in ([0, 0], [4, 0], [0, 4])])
    Q = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    ga = random_groups(rng, 30, 3)
    C = cost_matrix(H, Q)
    sol = solve_lp(build_lp1(C, ga, bounds_from_sigma(ga, 1)))
    assert sol.objective == pytest.approx(C.min(axis=1).sum(), abs=1e-9)


class TestReassign:
    def test_moves_match_plan_and_caches_stay_valid(self, rng):
        g, ga = planted_instance(rng, 60, 3, 2)
        fb = bounds_from_sigma(ga, Fraction(1, 5))
        p = PartitionState.from_labels(g, random_labels(rng, 60, 3), 3, ga)
        plan = solve_ip2(p.group_counts, fb)
        moves = reassign_to_fair(g, p, ga, plan)
        assert moves == plan.moves
        assert np.array_equal(p.group_counts, plan.N_target)
        p.check(g)
        assert is_fair(p, ga, fb)

    @pytest.mark.parametrize("order", ["lex", "greedy"])
    def test_orders_reach_target(self, rng, order):
        g, ga = planted_instance(rng, 50, 4, 3)
        fb = bounds_from_sigma(ga, Fraction(1, 2))
        p = PartitionState.from_labels(g, random_labels(rng, 50, 4), 4, ga)
        plan = solve_ip2(p.group_counts, fb)
        reassign_to_fair(g, p, ga, plan, order)
        assert np.array_equal(p.group_counts, plan.N_target)

    def test_greedy_takes_cheapest_single_move(self):
        g = two_triangles()
        ga = GroupAssignment.from_labels([0, 0, 1, 1, 1, 0])
        p = PartitionState.from_labels(g, [0, 0, 0, 0, 1, 1], 2, ga)
        N = p.group_counts.copy()
        target = N.copy()
        target[1, 0] -= 1
        target[1, 1] += 1
        before = ncut(g, p)
        reassign_to_fair(g, p, ga, ReassignmentPlan(N, target), "greedy")
        # node 3 rejoins its own triangle, the only group-1 move back to a partition with zero cut
        assert p.labels.tolist() == [0, 0, 0, 1, 1, 1]
        assert ncut(g, p) < before

    def test_stale_plan_rejected(self, rng):
        g, ga = planted_instance(rng, 20, 2, 2)
        p = PartitionState.from_labels(g, random_labels(rng, 20, 2), 2, ga)
        with pytest.raises(ValueError):
            reassign_to_fair(g, p, ga, ReassignmentPlan(p.group_counts + 1, p.group_counts))


class TestFairRounding:
    def test_two_triangles_separate(self):
        g = two_triangles()
        ga = GroupAssignment.from_labels([0, 1, 0, 1, 0, 1])
        fb = bounds_from_sigma(ga, Fraction(4, 5))
        emb = fair_spectral_embedding(g, ga, fb, 2, EmbeddingConfig(), strict=False)
        res = fair_rounding(g, emb.H, ga, fb)
        assert res.ncut == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("mode", ["lp", "kr"])
    def test_result_is_fair_and_best_of_trace(self, rng, mode):
        g, ga = planted_instance(rng, 80, 3, 2)
        fb = bounds_from_sigma(ga, Fraction(1, 5))
        H = rng.standard_normal((80, 3))
        res = fair_rounding(g, H, ga, fb, RoundingConfig(mode=mode, T3=5, eps3=1e-12))
        assert is_fair(res.partition, ga, fb)
        assert res.mode == mode
        assert res.ncut == min(t["ncut"] for t in res.trace)
        assert res.ncut == ncut(g, res.partition)
        res.partition.check(g)

    def test_deterministic(self, rng):
        g, ga = planted_instance(rng, 60, 3, 3)
        fb = bounds_from_sigma(ga, Fraction(1, 2))
        H = rng.standard_normal((60, 3))
        cfg = RoundingConfig(seed=4)
        a, b = fair_rounding(g, H, ga, fb, cfg), fair_rounding(g, H, ga, fb, cfg)
        assert a.ncut == b.ncut
        np.testing.assert_array_equal(a.partition.labels, b.partition.labels)

    def test_auto_mode_by_size(self):
        assert RoundingConfig().resolved_mode(1000, 5) == "lp"
        assert RoundingConfig().resolved_mode(100_000, 5) == "kr"

    @pytest.mark.parametrize("bad", [dict(mode="nearest"), dict(T3=0), dict(eps3=0),
                                     dict(reassign_order="random")])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            RoundingConfig(**bad)

    @settings(max_examples=25)
    @given(seed=st.integers(0, 2**32 - 1), sigma=st.sampled_from(["1/5", "1/2", "4/5"]),
           mode=st.sampled_from(["lp", "kr"]))
    def test_output_always_fair(self, seed, sigma, mode):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 60))
        k = int(rng.integers(2, 5))
        g, ga = planted_instance(rng, n, k, int(rng.integers(2, 4)))
        fb = bounds_from_sigma(ga, sigma)
        H = rng.standard_normal((n, k))
        try:
            res = fair_rounding(g, H, ga, fb, RoundingConfig(mode=mode, T3=3, n_init=2))
        except Ip2Infeasible:
            return
        assert is_fair(res.partition, ga, fb)
        assert np.all(res.partition.sizes >= 1)
