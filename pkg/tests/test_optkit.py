#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import itertools

import numpy as np  # type: ignore
import pytest

from slmpc._exceptions import DimensionMismatch, Infeasible, NumericalFailure
from slmpc.optkit import (
    ConstrainedLsProblem,
    LinearProgram,
    LpStatus,
    primal_residual,
    solve_cls,
    solve_lp,
)


def _vertex_oracle(c, G, h):
    """Minimum of c'z over every basic feasible point of Gz <= h."""
    n = G.shape[1]
    best = np.inf
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        z = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ z <= h + 1e-9):
            best = min(best, float(c @ z))
    return best


def _active_set_oracle(D, f, G, h):
    """Enumerates active sets of min |Dz - f|^2 s.t. Gz >= h."""
    n = D.shape[1]
    best, best_z = np.inf, None
    for size in range(0, min(n, G.shape[0]) + 1):
        for rows in itertools.combinations(range(G.shape[0]), size):
            Ga = G[list(rows)]
            m = len(rows)
            kkt = np.zeros((n + m, n + m))
            kkt[:n, :n] = 2.0 * D.T @ D
            kkt[:n, n:] = Ga.T
            kkt[n:, :n] = Ga
            rhs = np.concatenate([2.0 * D.T @ f, h[list(rows)]])
            try:
                z = np.linalg.solve(kkt, rhs)[:n]
            except np.linalg.LinAlgError:
                continue
            if np.all(G @ z >= h - 1e-9):
                r = D @ z - f
                if r @ r < best:
                    best, best_z = float(r @ r), z
    return best, best_z


def test_single_active_constraint():
    sol = solve_lp(LinearProgram(np.array([1.0]), G=np.array([[-1.0]]), h=np.array([-1.0])))
    assert sol.optimal
    assert sol.z[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


def test_contradictory_bounds_are_infeasible():
    lp = LinearProgram(np.array([1.0]), G=np.array([[-1.0], [1.0]]), h=np.array([-1.0, 0.0]))
    assert solve_lp(lp).status == LpStatus.INFEASIBLE


def test_bounds_and_equalities():
    # min x + y s.t. x + y = 2, x in [0.5, 3], y >= 0
    lp = LinearProgram(
        np.array([1.0, 2.0]),
        F=np.array([[1.0, 1.0]]),
        g=np.array([2.0]),
        bounds=[(0.5, 3.0), (0.0, None)],
    )
    sol = solve_lp(lp)
    assert sol.optimal
    np.testing.assert_allclose(sol.z, [2.0, 0.0], atol=1e-8)
    assert primal_residual(lp, sol.z) <= 1e-8


@pytest.mark.parametrize('seed', range(50))
def test_random_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 4
    G = np.vstack([rng.normal(size=(8, n)), np.eye(n), -np.eye(n)])
    h = np.concatenate([rng.uniform(0.5, 2.0, 8), np.full(2 * n, 5.0)])
    c = rng.normal(size=n)
    sol = solve_lp(LinearProgram(c, G=G, h=h))
    assert sol.optimal
    expected = _vertex_oracle(c, G, h)
    assert sol.objective == pytest.approx(expected, rel=1e-6, abs=1e-8)
    assert primal_residual(LinearProgram(c, G=G, h=h), sol.z) <= 1e-8


def test_optimal_duals_satisfy_kkt():
    rng = np.random.default_rng(7)
    G = np.vstack([rng.normal(size=(6, 3)), np.eye(3), -np.eye(3)])
    h = np.concatenate([rng.uniform(0.5, 2.0, 6), np.full(6, 4.0)])
    c = rng.normal(size=3)
    sol = solve_lp(LinearProgram(c, G=G, h=h))
    assert np.all(sol.dual >= -1e-7)
    # stationarity c + G'y = 0 and complementary slackness
    np.testing.assert_allclose(c + G.T @ sol.dual, 0.0, atol=1e-7)
    assert np.max(np.abs(sol.dual * (G @ sol.z - h))) <= 1e-7


def test_malformed_programs_are_rejected():
    with pytest.raises(DimensionMismatch):
        LinearProgram(np.zeros(2), G=np.zeros((3, 3)), h=np.zeros(3))
    with pytest.raises(DimensionMismatch):
        LinearProgram(np.zeros(2), G=np.zeros((3, 2)))
    with pytest.raises(NumericalFailure):
        LinearProgram(np.array([np.nan, 1.0]))


def test_cls_exact_interpolation():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    J = np.array([1.0, 2.0, 3.0])
    D = np.hstack([X, np.ones((3, 1))])
    z = solve_cls(ConstrainedLsProblem(D, J, D, J))
    np.testing.assert_allclose(z, [1.0, 2.0, 1.0], atol=1e-7)


def test_cls_constant_costs():
    X = np.array([[0.0, 0.0], [2.0, 1.0], [-1.0, 3.0], [4.0, -2.0]])
    J = np.full(4, 2.5)
    D = np.hstack([X, np.ones((4, 1))])
    z = solve_cls(ConstrainedLsProblem(D, J, D, J))
    np.testing.assert_allclose(z, [0.0, 0.0, 2.5], atol=1e-7)


@pytest.mark.parametrize('seed', range(20))
def test_cls_matches_active_set_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    D = np.hstack([rng.normal(size=(5, 2)), np.ones((5, 1))])
    f = rng.normal(size=5)
    G = D.copy()
    h = f.copy()
    z = solve_cls(ConstrainedLsProblem(D, f, G, h))
    best, best_z = _active_set_oracle(D, f, G, h)
    assert np.all(G @ z >= h - 1e-8)
    r = D @ z - f
    assert r @ r == pytest.approx(best, rel=1e-6, abs=1e-9)
    np.testing.assert_allclose(z, best_z, atol=1e-5)


def test_cls_undercut_constraint_becomes_active():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5, 2))
    D = np.hstack([X, np.ones((5, 1))])
    J = rng.normal(size=5)
    J[0] += 2.0
    unconstrained = np.linalg.lstsq(D, J, rcond=None)[0]
    assert np.any(D @ unconstrained < J - 1e-6)
    z = solve_cls(ConstrainedLsProblem(D, J, D, J))
    assert np.all(D @ z >= J - 1e-8)
    assert np.min(D @ z - J) == pytest.approx(0.0, abs=1e-6)


def test_cls_infeasible():
    D = np.eye(1)
    p = ConstrainedLsProblem(D, np.zeros(1), np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]))
    with pytest.raises(Infeasible):
        solve_cls(p)


def test_polish_settings_accepted_by_installed_osqp():
    import osqp  # type: ignore
    from scipy import sparse  # type: ignore

    from slmpc.optkit import _POLISH_KEY, _REFINE_KEY

    solver = osqp.OSQP()
    solver.setup(
        P=sparse.csc_matrix([[2.0]]),
        q=np.array([-2.0]),
        A=sparse.csc_matrix([[1.0]]),
        l=np.array([2.0]),
        u=np.array([np.inf]),
        verbose=False,
        **{_POLISH_KEY: True, _REFINE_KEY: 10}
    )
    res = solver.solve()
    assert res.x[0] == pytest.approx(2.0, abs=1e-4)
    # the full wrapper on the same problem: min (z - 1)^2 s.t. z >= 2
    z = solve_cls(ConstrainedLsProblem(np.eye(1), np.ones(1), np.eye(1), np.array([2.0])))
    assert z[0] == pytest.approx(2.0, abs=1e-8)
