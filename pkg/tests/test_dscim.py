import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mabrl.dscim import (
    AgentPosition,
    NeighborMode,
    aggregate,
    decide,
    distance,
    global_threshold,
    needs_interaction,
    select_neighbors,
)
from oracles import mean_fold, nearest_brute


def grid(rows, cols, scale=1.0):
    return [AgentPosition(c * scale, r * scale) for r in range(rows) for c in range(cols)]


class TestThreshold:
    def test_mean(self):
        assert global_threshold([-2, -4, -6], 3) == -4

    def test_singleton(self):
        assert global_threshold([0], 1) == 0

    def test_table_rewards_as_reals(self):
        expected = sum([-23.06, -11.10, -3.27]) / 3  # -12.4766...
        assert global_threshold([-23.06, -11.10, -3.27]) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-12.476666666, abs=1e-8)

    def test_empty(self):
        with pytest.raises(ValueError):
            global_threshold([])

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            global_threshold([1.0, 2.0], 3)


class TestNeedsInteraction:
    @pytest.mark.parametrize("r,g,expected", [(-5, -4, True), (-3, -4, False), (-4, -4, True)])
    def test_cases(self, r, g, expected):
        assert needs_interaction(r, g) is expected

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
    def test_threshold_coverage(self, rewards):
        g = global_threshold(rewards)
        flagged = sum(needs_interaction(r, g) for r in rewards)
        if len(set(rewards)) == 1:
            assert flagged == len(rewards)
        else:
            assert flagged >= 1
        assert needs_interaction(min(rewards), g)


class TestSelectNeighbors:
    def test_three_four_five(self):
        assert distance(AgentPosition(0, 0), AgentPosition(3, 4)) == 5.0

    def test_grid_center_nearest(self):
        pos = grid(3, 3)
        assert select_neighbors(pos, 4) == {1, 3, 5, 7}
        assert select_neighbors(pos, 4) == nearest_brute([(p.x, p.y) for p in pos], 4)

    def test_grid_corner_nearest(self):
        assert select_neighbors(grid(3, 3, 300.0), 0) == {1, 3}

    def test_literal_mode_selects_all_others(self):
        assert select_neighbors(grid(3, 3), 4, NeighborMode.PAPER_LITERAL) == {0, 1, 2, 3, 5, 6, 7, 8}

    @pytest.mark.parametrize("mode", list(NeighborMode))
    def test_two_agents(self, mode):
        pos = [AgentPosition(0, 0), AgentPosition(10, 2)]
        assert select_neighbors(pos, 0, mode) == {1}
        assert select_neighbors(pos, 1, mode) == {0}

    def test_single_agent(self):
        assert select_neighbors([AgentPosition(0, 0)], 0) == set()

    def test_nonfinite_position(self):
        with pytest.raises(ValueError):
            AgentPosition(float("nan"), 0)

    def test_random_layouts_match_brute_force(self):
        rnd = random.Random(5)
        for _ in range(200):
            n = rnd.randint(2, 25)
            # integer coordinates make exact ties common
            pts = [(rnd.randint(0, 6), rnd.randint(0, 6)) for _ in range(n)]
            pos = [AgentPosition(*p) for p in pts]
            i = rnd.randrange(n)
            assert select_neighbors(pos, i) == nearest_brute(pts, i)
            assert i not in select_neighbors(pos, i)


class TestAggregate:
    def test_single(self):
        np.testing.assert_array_equal(aggregate([[4, 2, 6], [0, 0, 0]], {0}), [[4, 2, 6]])

    def test_midpoint(self):
        np.testing.assert_array_equal(aggregate([[2, 2, 2], [4, 4, 4], [9, 9, 9]], {0, 1}), [[3, 3, 3]])

    def test_grid_neighbours_match_fold(self):
        rng = np.random.default_rng(1)
        obs = rng.integers(0, 50, size=(9, 12)).astype(float)
        ids = select_neighbors(grid(3, 3), 4)
        expected = mean_fold([obs[j].tolist() for j in sorted(ids)])
        np.testing.assert_allclose(aggregate(obs, ids)[0], expected, rtol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([[1.0]], set())

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        obs = rng.normal(size=(8, 5))
        ids = [1, 3, 4, 6]
        ref = aggregate(obs, ids)
        for perm in itertools.permutations(ids):
            np.testing.assert_allclose(aggregate(obs, list(perm)), ref, rtol=0, atol=0)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(3)
        obs = rng.normal(size=(6, 4))
        np.testing.assert_allclose(aggregate(2.5 * obs, {0, 2, 5}), 2.5 * aggregate(obs, {0, 2, 5}), rtol=1e-14)


class TestDecide:
    def test_below_mean_interacts(self):
        obs = np.arange(27, dtype=float).reshape(9, 3)
        rewards = [0.0] * 9
        rewards[4] = -9.0
        d = decide(rewards, grid(3, 3), obs, 4)
        assert d.interact and d.neighbor_ids == {1, 3, 5, 7}
        np.testing.assert_allclose(d.joint_info, obs[[1, 3, 5, 7]].mean(axis=0, keepdims=True))

    def test_above_mean_gets_zeros(self):
        obs = np.ones((9, 3))
        rewards = [-5.0] * 9
        rewards[0] = 0.0
        d = decide(rewards, grid(3, 3), obs, 0)
        assert not d.interact and not d.neighbor_ids
        assert d.joint_info.shape == (1, 3) and not d.joint_info.any()

    def test_equal_rewards_all_interact(self):
        obs = np.ones((9, 3))
        assert all(decide([-3.0] * 9, grid(3, 3), obs, i).interact for i in range(9))

    def test_single_agent_never_interacts(self):
        d = decide([-1.0], [AgentPosition(0, 0)], np.ones((1, 3)), 0)
        assert not d.interact
