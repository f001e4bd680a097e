#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest

from slmpc._exceptions import DimensionMismatch, EmptyInput, RolloutDiverged
from slmpc.geometry import VPolytope, contains
from slmpc.plant import LinearFeedback
from slmpc.safe_set import (
    ConvexSafeSetApprox,
    HullMembership,
    ProbabilityEstimate,
    RolloutRecord,
    build_reach_sets,
    epsilon_from_rollouts,
    estimate_epsilon,
    initial_convex_safe_set,
    read_rollouts,
    sample_rollouts,
    simulate_rollout,
    update_convex_safe_set,
    write_rollouts,
)


@pytest.fixture(scope='module')
def lqr_rollouts(sys, goal):
    policy = LinearFeedback(goal.K)
    out = []
    for i in range(20):
        r = simulate_rollout(sys, goal, policy, [-1.0, 0.0], np.random.default_rng(i))
        r.iteration, r.index = 1, i
        out.append(r)
    return out


def test_rollout_reaches_goal(sys, goal, lqr_rollouts):
    in_goal = HullMembership(goal.O)
    for r in lqr_rollouts:
        T = r.time_to_goal
        assert T is not None and T > 0
        assert len(r.states) == T + 1 and len(r.inputs) == T
        assert in_goal(r.states[T], 1e-7)
        assert not any(in_goal(x, 1e-7) for x in r.states[:T])
        assert r.consistent_with(sys)


def test_rollout_starting_in_goal(sys, goal, rng):
    r = simulate_rollout(sys, goal, LinearFeedback(goal.K), [0.0, 0.0], rng)
    assert r.time_to_goal == 0
    assert r.states.shape == (1, 2)
    assert r.inputs.shape == (0, 1)


def test_fixed_length_rollout(sys, goal, rng):
    r = simulate_rollout(
        sys, goal, LinearFeedback(goal.K), [0.0, 0.0], rng, stop_at_goal=False, n_steps=15
    )
    assert len(r.states) == 16
    assert r.time_to_goal == 0


def test_rollout_divergence(sys, goal, rng):
    with pytest.raises(RolloutDiverged):
        simulate_rollout(sys, goal, lambda x, t: np.zeros(1), [-8.0, 1.0], rng, t_max=5)


def test_tampered_rollout_is_inconsistent(sys, lqr_rollouts):
    r = lqr_rollouts[0]
    bad = RolloutRecord(r.states.copy(), r.inputs.copy(), r.time_to_goal)
    bad.states[1] += 0.5
    assert not bad.consistent_with(sys)
    assert bad.constraint_violations(sys) == 0


def test_scalar_inputs_are_reshaped():
    r = RolloutRecord(np.zeros((3, 2)), np.array([0.1, 0.2]), 2)
    assert r.inputs.shape == (2, 1)
    assert np.isnan(r.total_cost)


def test_single_rollout_gives_points(lqr_rollouts):
    sets = build_reach_sets(lqr_rollouts[:1])
    assert all(len(h) == 1 for h in sets.hulls)
    assert len(sets.hulls) == lqr_rollouts[0].time_to_goal + 1
    assert sets.rollout_count == 1


def test_first_hull_is_initial_state(lqr_rollouts):
    sets = build_reach_sets(lqr_rollouts)
    np.testing.assert_allclose(sets.hulls[0].vertices, [[-1.0, 0.0]])
    assert sets.iteration == 1


def test_every_state_in_its_step_hull(lqr_rollouts):
    sets = build_reach_sets(lqr_rollouts)
    for r in lqr_rollouts:
        for k in range(r.time_to_goal + 1):
            assert HullMembership(sets.hulls[k])(r.states[k], 1e-9)


def test_prefix_hulls_are_contained(lqr_rollouts):
    small = build_reach_sets(lqr_rollouts[:5])
    large = build_reach_sets(lqr_rollouts)
    for k, hull in enumerate(small.hulls):
        assert all(contains(large.hulls[k], v, 1e-9) for v in hull.vertices)


def test_reach_set_errors(lqr_rollouts):
    with pytest.raises(EmptyInput):
        build_reach_sets([])
    other = RolloutRecord(np.array([[-2.0, 0.0]]), np.zeros((0, 1)), 0, iteration=1)
    with pytest.raises(DimensionMismatch):
        build_reach_sets([lqr_rollouts[0], other])


def test_initial_safe_set_is_goal(goal):
    cs = initial_convex_safe_set(goal)
    assert len(cs) == len(goal.O)
    assert np.all(cs.steps == -1)
    assert all(cs.contains(v) for v in goal.O.vertices)


def test_identity_update(goal):
    cs0 = initial_convex_safe_set(goal)
    cs = update_convex_safe_set(cs0, None, goal)
    assert len(cs) == len(cs0)
    assert cs.covers(cs0) and cs0.covers(cs)


def test_update_is_superset(goal, lqr_rollouts):
    cs0 = initial_convex_safe_set(goal)
    sets = build_reach_sets(lqr_rollouts)
    cs1 = update_convex_safe_set(cs0, sets, goal)
    assert cs1.covers(cs0)
    for hull in sets.hulls:
        assert all(cs1.contains(v) for v in hull.vertices)
    assert set(np.unique(cs1.iterations)) <= {0, 1}
    cs2 = update_convex_safe_set(cs1, build_reach_sets(lqr_rollouts[:3]), goal)
    assert cs2.covers(cs1)


def test_safe_set_serialization(goal, lqr_rollouts):
    cs = update_convex_safe_set(initial_convex_safe_set(goal), build_reach_sets(lqr_rollouts), goal)
    again = ConvexSafeSetApprox.from_dict(cs.to_dict())
    np.testing.assert_array_equal(again.generators, cs.generators)
    np.testing.assert_array_equal(again.steps, cs.steps)
    df = cs.to_frame()
    assert list(df.columns) == ['x', 'y', 'k', 'iteration']
    assert len(df) == len(cs)


def test_epsilon_counts_transitions():
    square = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    cs = ConvexSafeSetApprox(square, np.zeros(4), np.full(4, -1))
    r = RolloutRecord(
        np.array([[0.0, 0.0], [0.5, 0.0], [2.0, 0.0], [0.0, 0.0]]), np.zeros((3, 1)), 3
    )
    est = epsilon_from_rollouts(cs, [r])
    assert (est.count, est.trials) == (1, 2)
    assert est.estimate == pytest.approx(0.5)


def test_epsilon_zero_on_invariant_goal(sys, goal, rng):
    cs0 = initial_convex_safe_set(goal)
    est = estimate_epsilon(
        cs0, LinearFeedback(goal.K), sys, goal, [0.0, 0.0], 10, rng, n_steps=20
    )
    assert est.trials == 200
    assert est.count == 0
    low, high = est.interval
    assert low == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < high < 0.05


def test_sampled_rollouts_have_their_own_streams(sys, goal):
    policy = LinearFeedback(goal.K)
    five = sample_rollouts(sys, goal, policy, [-1.0, 0.0], 5, 11)
    three = sample_rollouts(sys, goal, policy, [-1.0, 0.0], 3, 11)
    assert [r.index for r in five] == list(range(5))
    for a, b in zip(three, five):
        assert a.seed == b.seed
        np.testing.assert_array_equal(a.states, b.states)
    assert len({r.seed for r in five}) == 5
    other = sample_rollouts(sys, goal, policy, [-1.0, 0.0], 1, 12)
    assert other[0].seed != five[0].seed
    assert all(r.time_to_goal is not None for r in five)


def test_epsilon_estimate_is_reproducible(sys, goal):
    cs0 = initial_convex_safe_set(goal)
    policy = LinearFeedback(goal.K)
    a = estimate_epsilon(cs0, policy, sys, goal, [-1.0, 0.0], 8, 5)
    b = estimate_epsilon(cs0, policy, sys, goal, [-1.0, 0.0], 8, 5)
    assert (a.count, a.trials) == (b.count, b.trials)


@pytest.mark.slow
def test_pooled_sampling_matches_serial(sys, goal):
    policy = LinearFeedback(goal.K)
    serial = sample_rollouts(sys, goal, policy, [-1.0, 0.0], 12, 4)
    pooled = sample_rollouts(sys, goal, policy, [-1.0, 0.0], 12, 4, threads=2)
    for a, b in zip(serial, pooled):
        assert a.seed == b.seed
        np.testing.assert_array_equal(a.states, b.states)


def test_probability_without_trials():
    est = ProbabilityEstimate(0, 0)
    assert est.estimate == 0.0
    assert est.interval == (0.0, 1.0)
    assert est.to_dict()['wilson_high'] == 1.0


def test_rollout_archive(tmp_path, lqr_rollouts):
    fn = str(tmp_path / 'rollouts.jsonl')
    write_rollouts(fn, lqr_rollouts[:3])
    again = read_rollouts(fn)
    assert [r.index for r in again] == [0, 1, 2]
    np.testing.assert_array_equal(again[2].states, lqr_rollouts[2].states)
    assert again[1].time_to_goal == lqr_rollouts[1].time_to_goal


def test_hull_membership_of_segment():
    seg = HullMembership(VPolytope(np.array([[0.0, 0.0], [2.0, 2.0]])))
    assert seg(np.array([1.0, 1.0]))
    assert not seg(np.array([1.0, 0.0]))
