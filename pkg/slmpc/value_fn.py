#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Sampled worst-case cost-to-go and its convex interpolation Q."""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from scipy.spatial import ConvexHull, QhullError  # type: ignore

from ._exceptions import DimensionMismatch, EmptyInput, IncompleteRollout, OutsideDomain
from ._settings import GAMMA_TOL, HULL_MEMBERSHIP_TOL, T_MAX
from .geometry import VPolytope
from .helper_functions import state_columns
from .optkit import ConstrainedLsProblem, LinearProgram, LpStatus, solve_cls, solve_lp
from .plant import GoalSetData, LtiSystem, StageCost, stage_cost
from .safe_set import (
    ConvexSafeSetApprox,
    HullMembership,
    Policy,
    ProbabilityEstimate,
    RolloutRecord,
    sample_rollouts,
)

PlaneKey = Tuple[int, int]


def realized_cost_to_go(rollout: RolloutRecord, cost: StageCost) -> np.ndarray:
    """Realized cost-to-go at every stored state

    input  - completed roll-out, stage cost
    return - J_k = sum_{t=k}^{T} h(x_t, u_t) for k = 0..T, with u_T = K x_T
    """
    if rollout.time_to_goal is None:
        raise IncompleteRollout('Roll-out {} never reached the goal set.'.format(rollout.index))
    T = rollout.time_to_goal
    K = np.atleast_2d(cost.goal.K)
    h = np.empty(T + 1)
    for t in range(T):
        h[t] = stage_cost(cost, rollout.states[t], rollout.inputs[t])
    h[T] = stage_cost(cost, rollout.states[T], K @ rollout.states[T])
    return np.cumsum(h[::-1])[::-1]


@dataclass(frozen=True)
class CostHyperplane:
    step: int
    iteration: int
    a: np.ndarray
    b: float

    def __call__(self, x: np.ndarray) -> float:
        return float(self.a @ x + self.b)

    def to_dict(self) -> Dict[str, Any]:
        return {'step': self.step, 'iteration': self.iteration, 'a': self.a.tolist(), 'b': self.b}


def fit_upper_hyperplane(
    states_k: Sequence[Sequence[float]],
    costs_k: Sequence[float],
    step: int = 0,
    iteration: int = 0,
) -> CostHyperplane:
    """Least-squares hyperplane lying above every sample

    input  - states of one step, their realized costs
    return - CostHyperplane (a, b) with a'x_i + b >= J_i
    """
    X = np.atleast_2d(np.asarray(states_k, dtype=float))
    J = np.asarray(costs_k, dtype=float)
    if len(X) == 0:
        raise EmptyInput('No samples to fit a hyperplane to.')
    if len(X) != len(J):
        raise DimensionMismatch('{} states for {} costs'.format(len(X), len(J)))
    D = np.hstack([X, np.ones((len(X), 1))])
    z = solve_cls(ConstrainedLsProblem(D, J, D, J))
    # solver slack is pushed into the offset so dominance holds exactly
    b = z[-1] + max(0.0, float(np.max(J - D @ z)))
    return CostHyperplane(step, iteration, z[:-1], float(b))


def fit_iteration_planes(rollouts: Sequence[RolloutRecord], iteration: int) -> Dict[PlaneKey, CostHyperplane]:
    """
    One plane per step k over the roll-outs still running at k
    """
    logger = logging.getLogger(__name__)
    planes = {}
    last = max(r.time_to_goal for r in rollouts)
    for k in range(last + 1):
        members = [r for r in rollouts if r.time_to_goal >= k]
        planes[(iteration, k)] = fit_upper_hyperplane(
            [r.states[k] for r in members], [r.cost_to_go[k] for r in members], k, iteration
        )
    msg = 'Fitted {} cost hyperplanes for iteration {}'
    logger.debug(msg.format(len(planes), iteration))
    return planes


@dataclass(frozen=True)
class TerminalData:
    vertices: np.ndarray
    costs: np.ndarray
    iterations: np.ndarray
    steps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'vertices', np.atleast_2d(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, 'costs', np.asarray(self.costs, dtype=float))
        object.__setattr__(self, 'iterations', np.asarray(self.iterations, dtype=int))
        object.__setattr__(self, 'steps', np.asarray(self.steps, dtype=int))
        if len(self.vertices) == 0:
            raise EmptyInput('TerminalData needs at least one vertex.')
        if np.any(self.costs < 0):
            raise DimensionMismatch('Terminal costs must be nonnegative.')

    @property
    def dim(self) -> int:
        return int(self.vertices.shape[1])

    def __len__(self) -> int:
        return int(self.vertices.shape[0])

    @cached_property
    def reduced(self) -> Tuple[np.ndarray, np.ndarray]:
        """Pairs on the lower convex envelope of (vertex, cost)

        Dropping the others leaves Q unchanged.
        """
        if len(self) <= self.dim + 1:
            return self.vertices, self.costs
        lifted = np.hstack([self.vertices, self.costs[:, None]])
        try:
            hull = ConvexHull(lifted)
        except QhullError:
            return self.vertices, self.costs
        lower = hull.equations[:, -2] < -1e-10
        keep = np.unique(hull.simplices[lower].ravel())
        return self.vertices[keep], self.costs[keep]

    @cached_property
    def domain(self) -> HullMembership:
        return HullMembership(VPolytope(self.vertices))

    def in_domain(self, x: np.ndarray, tol: float = HULL_MEMBERSHIP_TOL) -> bool:
        return self.domain(np.asarray(x, dtype=float), tol)

    def to_dict(self) -> List[Dict[str, Any]]:
        return [
            {'vertex': v.tolist(), 'cost': float(c), 'iteration': int(i), 'step': int(k)}
            for v, c, i, k in zip(self.vertices, self.costs, self.iterations, self.steps)
        ]

    @classmethod
    def from_dict(cls, rows: List[Dict[str, Any]]) -> 'TerminalData':
        return cls(
            np.array([r['vertex'] for r in rows], dtype=float),
            np.array([r['cost'] for r in rows], dtype=float),
            np.array([r['iteration'] for r in rows], dtype=int),
            np.array([r['step'] for r in rows], dtype=int),
        )


def goal_terminal_data(goal: GoalSetData) -> TerminalData:
    """
    Q^0: the vertices of O at cost 0
    """
    k = len(goal.O)
    return TerminalData(goal.O.vertices, np.zeros(k), np.zeros(k), np.full(k, -1))


def build_terminal_data(cs: ConvexSafeSetApprox, planes: Dict[PlaneKey, CostHyperplane]) -> TerminalData:
    """Costs for every safe-set generator

    input  - convex safe set, planes keyed by (iteration, step)
    return - TerminalData; O vertices cost 0, others a'v + b of their step
    """
    logger = logging.getLogger(__name__)
    costs = np.zeros(len(cs))
    for s, (v, j, k) in enumerate(zip(cs.generators, cs.iterations, cs.steps)):
        if k < 0:
            continue
        costs[s] = max(0.0, planes[(int(j), int(k))](v))
    td = TerminalData(cs.generators, costs, cs.iterations, cs.steps)
    msg = 'Terminal data: {} pairs, {} on the lower envelope'
    logger.info(msg.format(len(td), len(td.reduced[0])))
    return td


def eval_Q(td: TerminalData, x: Sequence[float]) -> float:
    """Convex interpolation of the terminal costs at x

    input  - TerminalData, point
    return - min sum(l_s c_s) s.t. sum(l_s v_s) = x, l in the simplex
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != td.dim:
        raise DimensionMismatch('{}-D point for {}-D terminal data'.format(x.shape[0], td.dim))
    V, c = td.reduced
    k = len(V)
    F = np.vstack([V.T, np.ones((1, k))])
    g = np.concatenate([x, [1.0]])
    sol = solve_lp(LinearProgram(c, F=F, g=g, bounds=[(0.0, None)] * k))
    if sol.status == LpStatus.INFEASIBLE:
        raise OutsideDomain(x)
    return max(0.0, sol.objective)


def _stage_costs(rollout: RolloutRecord, cost: StageCost) -> np.ndarray:
    T = len(rollout.inputs)
    if len(rollout.cost_to_go) == T + 1:
        return rollout.cost_to_go[:-1] - rollout.cost_to_go[1:]
    return np.array([stage_cost(cost, rollout.states[t], rollout.inputs[t]) for t in range(T)])


def gamma_from_rollouts(
    td: TerminalData, cost: StageCost, rollouts: Iterable[RolloutRecord], tol: float = GAMMA_TOL
) -> ProbabilityEstimate:
    """
    Transitions from the domain where Q fails to decrease by h, or x+ leaves the domain
    """
    count = 0
    trials = 0
    for r in rollouts:
        h = _stage_costs(r, cost)
        values: List[Optional[float]] = [
            eval_Q(td, x) if td.in_domain(x) else None for x in r.states
        ]
        for t in range(len(h)):
            if values[t] is None:
                continue
            trials += 1
            if values[t + 1] is None or values[t + 1] + h[t] - values[t] > tol:
                count += 1
    return ProbabilityEstimate(count, trials)


def estimate_gamma(
    td: TerminalData,
    policy: Policy,
    sys: LtiSystem,
    cost: StageCost,
    x0: Sequence[float],
    M: int,
    rng: Union[np.random.Generator, int],
    t_max: int = T_MAX,
    n_steps: Optional[int] = None,
    threads: int = 1,
) -> ProbabilityEstimate:
    """Monte-Carlo frequency of the Lyapunov decrease failing for Q

    input  - terminal data, closed-loop policy, system, stage cost, x0, count
             rng: master seed (or generator) of the per-roll-out streams
    return - ProbabilityEstimate with Wilson interval
    """
    logger = logging.getLogger(__name__)
    rollouts = sample_rollouts(
        sys, cost.goal, policy, x0, M, rng, t_max, n_steps, family='gamma', threads=threads
    )
    est = gamma_from_rollouts(td, cost, rollouts)
    msg = 'gamma = {:.4f} ({} of {} transitions)'
    logger.info(msg.format(est.estimate, est.count, est.trials))
    return est


def lyapunov_decrease_fraction(
    value: Callable[[np.ndarray], float],
    cost: StageCost,
    rollouts: Iterable[RolloutRecord],
    tol: float = GAMMA_TOL,
) -> ProbabilityEstimate:
    """Realized transitions where value(x) >= h(x, u) + value(x+)

    input  - value function (e.g. the optimal FTOCP cost), stage cost, roll-outs
    return - ProbabilityEstimate of the transitions that satisfy the decrease
    """
    count = 0
    trials = 0
    for r in rollouts:
        h = _stage_costs(r, cost)
        values = [value(x) for x in r.states]
        for t in range(len(h)):
            trials += 1
            count += int(values[t] + tol >= h[t] + values[t + 1])
    return ProbabilityEstimate(count, trials)


def q_surface(td: TerminalData, axes: Sequence[np.ndarray]) -> pd.DataFrame:
    """Q sampled on a planar grid

    input  - terminal data, the two axis sample vectors
    return - DataFrame (x, y, Q) with NaN outside the domain
    """
    if td.dim != 2 or len(axes) != 2:
        raise DimensionMismatch('Q surfaces are sampled on planar grids only.')
    rows = []
    for xv in axes[0]:
        for yv in axes[1]:
            p = np.array([xv, yv])
            q = eval_Q(td, p) if td.in_domain(p) else np.nan
            rows.append((xv, yv, q))
    return pd.DataFrame(rows, columns=state_columns(2) + ['Q'])


def compare_surfaces(lower: TerminalData, upper: TerminalData, axes: Sequence[np.ndarray]) -> Dict[str, Any]:
    """
    Share of common grid points where the upper surface is not below the lower one
    """
    a = q_surface(lower, axes)['Q'].to_numpy()
    b = q_surface(upper, axes)['Q'].to_numpy()
    both = ~(np.isnan(a) | np.isnan(b))
    above = int(np.sum(b[both] >= a[both] - 1e-9))
    return {
        'grid_points': int(len(a)),
        'common_points': int(both.sum()),
        'upper_dominates': above,
        'fraction': above / int(both.sum()) if both.any() else float('nan'),
    }
