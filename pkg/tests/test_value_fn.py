#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import itertools

import numpy as np  # type: ignore
import pytest

from slmpc._exceptions import DimensionMismatch, EmptyInput, IncompleteRollout, OutsideDomain
from slmpc.optkit import LinearProgram, solve_lp
from slmpc.plant import LinearFeedback, StageCost, stage_cost
from slmpc.safe_set import (
    RolloutRecord,
    build_reach_sets,
    initial_convex_safe_set,
    simulate_rollout,
    update_convex_safe_set,
)
from slmpc.value_fn import (
    CostHyperplane,
    TerminalData,
    build_terminal_data,
    compare_surfaces,
    estimate_gamma,
    eval_Q,
    fit_iteration_planes,
    fit_upper_hyperplane,
    gamma_from_rollouts,
    goal_terminal_data,
    lyapunov_decrease_fraction,
    q_surface,
    realized_cost_to_go,
)

SQUARE = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


def _td(vertices, costs):
    k = len(vertices)
    return TerminalData(vertices, costs, np.ones(k, dtype=int), np.arange(k))


def _triangle_oracle(V, c, x):
    """Q at x by enumerating every simplex (point, edge, triangle) of the generators."""
    best = np.inf
    for size in (1, 2, 3):
        for idx in itertools.combinations(range(len(V)), size):
            M = np.vstack([V[list(idx)].T, np.ones((1, size))])
            lam, *_ = np.linalg.lstsq(M, np.concatenate([x, [1.0]]), rcond=None)
            if np.all(lam >= -1e-12) and np.allclose(M @ lam, np.concatenate([x, [1.0]]), atol=1e-10):
                best = min(best, float(c[list(idx)] @ lam))
    return best


def _full_lp(V, c, x):
    k = len(V)
    F = np.vstack([V.T, np.ones((1, k))])
    sol = solve_lp(LinearProgram(c, F=F, g=np.concatenate([x, [1.0]]), bounds=[(0.0, None)] * k))
    return sol.objective


@pytest.fixture(scope='module')
def learned(sys, goal, cost):
    policy = LinearFeedback(goal.K)
    rollouts = []
    for i in range(12):
        r = simulate_rollout(sys, goal, policy, [-1.0, 0.0], np.random.default_rng(50 + i))
        r.iteration, r.index = 1, i
        r.cost_to_go = realized_cost_to_go(r, cost)
        rollouts.append(r)
    cs = update_convex_safe_set(initial_convex_safe_set(goal), build_reach_sets(rollouts), goal)
    planes = fit_iteration_planes(rollouts, 1)
    return rollouts, cs, planes, build_terminal_data(cs, planes)


def test_cost_to_go_by_hand(unit_goal):
    cost = StageCost(1.0, 1.0, unit_goal)
    r = RolloutRecord(np.array([[3.0, 0.0], [2.0, 0.0], [0.5, 0.0]]), np.zeros((2, 1)), 2)
    J = realized_cost_to_go(r, cost)
    np.testing.assert_allclose(J, [3.0, 1.0, 0.0], atol=1e-9)


def test_cost_to_go_telescopes(cost, learned):
    rollouts = learned[0]
    for r in rollouts[:4]:
        J = r.cost_to_go
        assert np.all(np.diff(J) <= 1e-12)
        for k in range(r.time_to_goal):
            h = stage_cost(cost, r.states[k], r.inputs[k])
            assert J[k] - J[k + 1] == pytest.approx(h, abs=1e-9)


def test_cost_to_go_zero_inside_goal(sys, goal, cost, rng):
    r = simulate_rollout(sys, goal, LinearFeedback(goal.K), [0.0, 0.0], rng)
    np.testing.assert_allclose(realized_cost_to_go(r, cost), [0.0], atol=1e-9)


def test_cost_to_go_scales_with_weights(goal, learned):
    r = learned[0][0]
    single = realized_cost_to_go(r, StageCost(0.1, 1.0, goal))
    double = realized_cost_to_go(r, StageCost(0.2, 2.0, goal))
    np.testing.assert_allclose(double, 2.0 * single, rtol=1e-7, atol=1e-10)


def test_incomplete_rollout(cost):
    r = RolloutRecord(np.zeros((3, 2)), np.zeros((2, 1)), None)
    with pytest.raises(IncompleteRollout):
        realized_cost_to_go(r, cost)


def test_plane_through_single_sample():
    plane = fit_upper_hyperplane([[0.5, -1.0]], [4.0], step=3, iteration=2)
    assert plane(np.array([0.5, -1.0])) == pytest.approx(4.0, abs=1e-6)
    assert (plane.step, plane.iteration) == (3, 2)


def test_plane_recovers_affine_data():
    X = np.random.default_rng(0).normal(size=(6, 2))
    J = X @ np.array([2.0, -1.0]) + 3.0
    plane = fit_upper_hyperplane(X, J)
    np.testing.assert_allclose(plane.a, [2.0, -1.0], atol=1e-5)
    assert plane.b == pytest.approx(3.0, abs=1e-5)


def test_plane_dominates_samples(learned):
    rollouts, _, planes, _ = learned
    for (j, k), plane in planes.items():
        for r in rollouts:
            if r.time_to_goal >= k:
                assert plane(r.states[k]) >= r.cost_to_go[k] - 1e-7


def test_plane_errors():
    with pytest.raises(EmptyInput):
        fit_upper_hyperplane(np.zeros((0, 2)), [])
    with pytest.raises(DimensionMismatch):
        fit_upper_hyperplane([[0.0, 0.0], [1.0, 0.0]], [1.0])


def test_terminal_data_validation():
    with pytest.raises(EmptyInput):
        _td(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(DimensionMismatch):
        _td(SQUARE, np.array([0.0, 1.0, -1.0, 0.0]))


def test_q_is_zero_on_goal(goal, rng):
    td = goal_terminal_data(goal)
    V = goal.O.vertices
    for _ in range(10):
        x = rng.dirichlet(np.ones(len(V))) @ V
        assert eval_Q(td, x) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(OutsideDomain):
        eval_Q(td, [5.0, 5.0])


def test_q_midpoint_bound():
    c = np.array([0.0, 1.0, 2.0, 3.0])
    td = _td(SQUARE, c)
    for i, j in itertools.combinations(range(4), 2):
        mid = 0.5 * (SQUARE[i] + SQUARE[j])
        assert eval_Q(td, mid) <= 0.5 * (c[i] + c[j]) + 1e-8


def test_q_matches_simplex_oracle():
    rng = np.random.default_rng(21)
    V = rng.uniform(-2, 2, size=(6, 2))
    c = rng.uniform(0, 5, size=6)
    td = _td(V, c)
    for _ in range(15):
        x = rng.dirichlet(np.ones(6)) @ V
        assert eval_Q(td, x) == pytest.approx(_triangle_oracle(V, c, x), abs=1e-7)


def test_q_bounded_by_generators_and_convex(learned):
    td = learned[3]
    for v, c in zip(td.vertices, td.costs):
        assert eval_Q(td, v) <= c + 1e-7
    rng = np.random.default_rng(4)
    V = td.vertices
    for _ in range(20):
        x = rng.dirichlet(np.ones(len(V))) @ V
        y = rng.dirichlet(np.ones(len(V))) @ V
        qx, qy = eval_Q(td, x), eval_Q(td, y)
        assert qx >= 0.0
        for lam in (0.25, 0.5, 0.75):
            assert eval_Q(td, lam * x + (1 - lam) * y) <= lam * qx + (1 - lam) * qy + 1e-6


def test_reduced_pairs_keep_q(learned):
    td = learned[3]
    V, c = td.reduced
    assert len(V) <= len(td)
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.dirichlet(np.ones(len(td))) @ td.vertices
        assert eval_Q(td, x) == pytest.approx(_full_lp(td.vertices, td.costs, x), abs=1e-6)


def test_terminal_data_costs(goal, learned):
    _, cs, planes, td = learned
    assert len(td) == len(cs)
    on_goal = td.steps == -1
    assert np.all(td.costs[on_goal] == 0.0)
    for v, cst, j, k in zip(td.vertices, td.costs, td.iterations, td.steps):
        if k >= 0:
            assert cst == pytest.approx(max(0.0, planes[(j, k)](v)))
    again = TerminalData.from_dict(td.to_dict())
    np.testing.assert_array_equal(again.costs, td.costs)


def test_hyperplane_serialization():
    plane = CostHyperplane(2, 1, np.array([0.5, -0.5]), 1.25)
    assert plane.to_dict() == {'step': 2, 'iteration': 1, 'a': [0.5, -0.5], 'b': 1.25}
    assert plane(np.array([2.0, 2.0])) == pytest.approx(1.25)


def test_gamma_zero_on_goal(sys, goal, cost, rng):
    td = goal_terminal_data(goal)
    est = estimate_gamma(td, LinearFeedback(goal.K), sys, cost, [0.0, 0.0], 5, rng, n_steps=10)
    assert est.trials == 50
    assert est.count == 0
    rollouts = [
        simulate_rollout(sys, goal, LinearFeedback(goal.K), [0.0, 0.0], rng, stop_at_goal=False, n_steps=5)
    ]
    assert gamma_from_rollouts(td, cost, rollouts).count == 0
    zero = lyapunov_decrease_fraction(lambda x: 0.0, cost, rollouts, tol=1e-6)
    assert zero.count == zero.trials == 5


def test_gamma_counts_domain_exits(cost):
    td = _td(SQUARE, np.zeros(4))
    r = RolloutRecord(np.array([[0.0, 0.0], [3.0, 0.0]]), np.zeros((1, 1)), None)
    est = gamma_from_rollouts(td, cost, [r])
    assert (est.count, est.trials) == (1, 1)


def test_q_surface_and_comparison(learned):
    td = learned[3]
    axes = [np.linspace(-2.0, 1.0, 7), np.linspace(-1.0, 1.0, 5)]
    df = q_surface(td, axes)
    assert list(df.columns) == ['x', 'y', 'Q']
    assert len(df) == 35
    assert df['Q'].isna().any()
    assert (df['Q'].dropna() >= 0).all()
    same = compare_surfaces(td, td, axes)
    assert same['fraction'] == 1.0
    assert same['common_points'] == int(df['Q'].notna().sum())
