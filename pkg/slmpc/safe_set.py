#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Roll-out data, sampled reachable sets and the convex safe set.

A roll-out is one closed-loop run from x0 until the goal set O is reached.
Step-k hulls of the states of many roll-outs approximate the k-step robust
reachable sets; their union with O, convexified over all iterations, is the
set the controller is allowed to terminate in.
"""
import os
import logging
import concurrent.futures as cf
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from rich.progress import track

from ._exceptions import DimensionMismatch, EmptyInput, RolloutDiverged
from ._settings import DEDUP_TOL, GOAL_TOL, HULL_MEMBERSHIP_TOL, T_MAX
from .geometry import (
    HPolytope,
    VPolytope,
    contains,
    convex_hull_2d,
    vrep_to_hrep_2d,
)
from .helper_functions import (
    derive_seed,
    jsonl_reader,
    jsonl_writer,
    state_columns,
    wilson_interval,
    worker_init,
)
from .plant import GoalSetData, LtiSystem, sample_disturbance, step

Policy = Callable[[np.ndarray, int], np.ndarray]


class HullMembership:
    """Point-in-hull test; uses facets for full-dimensional planar hulls."""

    def __init__(self, hull: VPolytope):
        if hull.dim == 2:
            hull = convex_hull_2d(hull.vertices)
        self.hull = hull
        self.facets: Optional[HPolytope] = None
        if hull.dim == 2 and len(hull) >= 3:
            self.facets = vrep_to_hrep_2d(hull)

    def __call__(self, x: np.ndarray, tol: float = HULL_MEMBERSHIP_TOL) -> bool:
        if self.facets is not None:
            return bool(np.all(self.facets.F @ x <= self.facets.g + tol))
        return contains(self.hull, x, tol)


@dataclass
class ProbabilityEstimate:
    count: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.count / self.trials if self.trials else 0.0

    @property
    def interval(self):
        return wilson_interval(self.count, self.trials)

    def to_dict(self) -> Dict[str, Any]:
        low, high = self.interval
        return {
            'count': self.count,
            'trials': self.trials,
            'estimate': self.estimate,
            'wilson_low': low,
            'wilson_high': high,
        }


@dataclass
class RolloutRecord:
    states: np.ndarray
    inputs: np.ndarray
    time_to_goal: Optional[int]
    iteration: int = 0
    index: int = 0
    seed: Optional[int] = None
    cost_to_go: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        self.inputs = inputs
        self.cost_to_go = np.asarray(self.cost_to_go, dtype=float)

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    @property
    def total_cost(self) -> float:
        return float(self.cost_to_go[0]) if len(self.cost_to_go) else float('nan')

    def implied_disturbances(self, sys: LtiSystem) -> np.ndarray:
        return self.states[1:] - self.states[:-1] @ sys.A.T - self.inputs @ sys.B.T

    def consistent_with(self, sys: LtiSystem, tol: float = 1e-9) -> bool:
        """
        Every implied disturbance lies in W
        """
        return all(contains(sys.W, w, tol) for w in self.implied_disturbances(sys))

    def constraint_violations(self, sys: LtiSystem, tol: float = 1e-7) -> int:
        bad = sum(not contains(sys.X, x, tol) for x in self.states)
        bad += sum(not contains(sys.U, u, tol) for u in self.inputs)
        return int(bad)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iteration': self.iteration,
            'index': self.index,
            'seed': self.seed,
            'time_to_goal': self.time_to_goal,
            'states': self.states.tolist(),
            'inputs': self.inputs.tolist(),
            'cost_to_go': self.cost_to_go.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'RolloutRecord':
        return cls(
            states=np.array(d['states'], dtype=float),
            inputs=np.array(d['inputs'], dtype=float),
            time_to_goal=d['time_to_goal'],
            iteration=d['iteration'],
            index=d['index'],
            seed=d['seed'],
            cost_to_go=np.array(d['cost_to_go'], dtype=float),
        )


def write_rollouts(fn: str, rollouts: Iterable[RolloutRecord]) -> None:
    jsonl_writer(fn, (r.to_dict() for r in rollouts))


def read_rollouts(fn: str) -> List[RolloutRecord]:
    return [RolloutRecord.from_dict(d) for d in jsonl_reader(fn)]


def simulate_rollout(
    sys: LtiSystem,
    goal: GoalSetData,
    policy: Policy,
    x0: Sequence[float],
    rng: np.random.Generator,
    t_max: int = T_MAX,
    stop_at_goal: bool = True,
    n_steps: Optional[int] = None,
) -> RolloutRecord:
    """Closed-loop simulation under sampled disturbances

    input  - system, goal set, policy (x, t) -> u, x0, random stream
             stop_at_goal: end at the first state in O, else run n_steps
    return - RolloutRecord without cost-to-go
    """
    in_goal = HullMembership(goal.O)
    x = np.asarray(x0, dtype=float)
    states = [x]
    inputs = []
    time_to_goal: Optional[int] = None
    horizon = t_max if stop_at_goal or n_steps is None else n_steps
    for k in range(horizon + 1):
        if time_to_goal is None and in_goal(x, GOAL_TOL):
            time_to_goal = k
            if stop_at_goal:
                break
        if k == horizon:
            break
        u = np.atleast_1d(policy(x, k))
        x = step(sys, x, u, sample_disturbance(sys, rng))
        states.append(x)
        inputs.append(u)
    if stop_at_goal and time_to_goal is None:
        msg = 'Roll-out did not reach the goal set within {} steps (last state {})'
        raise RolloutDiverged(msg.format(t_max, x.tolist()))
    return RolloutRecord(
        np.array(states), np.array(inputs).reshape(len(inputs), sys.d), time_to_goal
    )


def _sample_task(task: Tuple) -> RolloutRecord:
    sys, goal, policy, x0, seed, t_max, n_steps, index = task
    rng = np.random.default_rng(seed)
    record = simulate_rollout(
        sys, goal, policy, x0, rng, t_max, stop_at_goal=n_steps is None, n_steps=n_steps
    )
    record.index = index
    record.seed = seed
    return record


def sample_rollouts(
    sys: LtiSystem,
    goal: GoalSetData,
    policy: Policy,
    x0: Sequence[float],
    M: int,
    rng: Union[np.random.Generator, int],
    t_max: int = T_MAX,
    n_steps: Optional[int] = None,
    family: str = 'evaluation',
    threads: int = 1,
) -> List[RolloutRecord]:
    """Monte-Carlo roll-outs, each on its own random stream

    input  - system, goal, policy, x0, roll-out count
             rng: master seed, or a generator that draws one
             threads: worker processes; the result does not depend on it
    return - roll-outs in index order
    """
    logger = logging.getLogger(__name__)
    base = rng if isinstance(rng, (int, np.integer)) else int(rng.integers(2 ** 62))
    tasks = [
        (sys, goal, policy, np.asarray(x0, dtype=float), derive_seed(int(base), family, i), t_max, n_steps, i)
        for i in range(M)
    ]
    msg = 'Running {} {} roll-outs using {} CPUs.'
    logger.debug(msg.format(M, family, threads))
    if threads <= 1:
        return [_sample_task(t) for t in tasks]
    p: cf.ProcessPoolExecutor = cf.ProcessPoolExecutor(
        threads, initializer=worker_init, initargs=(os.getpid(),)
    )
    chunksize = max(1, M // (4 * threads))
    with p:
        return list(track(p.map(_sample_task, tasks, chunksize=chunksize), 'Roll-outs...', M))


@dataclass(frozen=True)
class SampledReachSets:
    x0: np.ndarray
    hulls: List[VPolytope]
    iteration: int
    rollout_count: int


def _hull(points: np.ndarray) -> VPolytope:
    if points.shape[1] == 2:
        return convex_hull_2d(points)
    if points.shape[1] == 1:
        return VPolytope(np.array([[points.min()], [points.max()]]))
    return VPolytope(points)


def build_reach_sets(rollouts: Sequence[RolloutRecord], T_align: Optional[int] = None) -> SampledReachSets:
    """Step-wise hulls of roll-out states

    input  - roll-outs of one iteration from a common x0
             T_align: last step to build, default max time_to_goal
    return - SampledReachSets; a roll-out contributes up to its own T
    """
    logger = logging.getLogger(__name__)
    if not rollouts:
        raise EmptyInput('No roll-outs to build reachable sets from.')
    x0 = rollouts[0].x0
    for r in rollouts:
        if not np.allclose(r.x0, x0, atol=DEDUP_TOL) or r.iteration != rollouts[0].iteration:
            raise DimensionMismatch('Roll-outs differ in initial state or iteration.')
    lengths = [r.time_to_goal if r.time_to_goal is not None else len(r.states) - 1 for r in rollouts]
    last = max(lengths) if T_align is None else T_align
    hulls = []
    for k in range(last + 1):
        points = np.array([r.states[k] for r, T in zip(rollouts, lengths) if k <= T])
        if len(points) == 0:
            break
        hulls.append(_hull(points))
    msg = 'Built {} step hulls from {} roll-outs (iteration {})'
    logger.debug(msg.format(len(hulls), len(rollouts), rollouts[0].iteration))
    return SampledReachSets(x0.copy(), hulls, rollouts[0].iteration, len(rollouts))


@dataclass(frozen=True)
class ConvexSafeSetApprox:
    """Generators of the convex safe set with their provenance.

    O vertices carry step -1. `hull` keeps only extreme points (planar case).
    """

    generators: np.ndarray
    iterations: np.ndarray
    steps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'generators', np.atleast_2d(np.asarray(self.generators, dtype=float)))
        object.__setattr__(self, 'iterations', np.asarray(self.iterations, dtype=int))
        object.__setattr__(self, 'steps', np.asarray(self.steps, dtype=int))
        if not (len(self.generators) == len(self.iterations) == len(self.steps)):
            raise DimensionMismatch('Generators and provenance differ in length.')

    @property
    def dim(self) -> int:
        return int(self.generators.shape[1])

    def __len__(self) -> int:
        return int(self.generators.shape[0])

    @cached_property
    def hull(self) -> VPolytope:
        return _hull(self.generators)

    @cached_property
    def _membership(self) -> HullMembership:
        return HullMembership(self.hull)

    def contains(self, x: np.ndarray, tol: float = HULL_MEMBERSHIP_TOL) -> bool:
        return self._membership(np.asarray(x, dtype=float), tol)

    def covers(self, other: 'ConvexSafeSetApprox', tol: float = HULL_MEMBERSHIP_TOL) -> bool:
        return all(self.contains(v, tol) for v in other.hull.vertices)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'generators': [
                {'vertex': v.tolist(), 'iteration': int(i), 'step': int(k)}
                for v, i, k in zip(self.generators, self.iterations, self.steps)
            ],
            'hull': self.hull.vertices.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'ConvexSafeSetApprox':
        gens = d['generators']
        return cls(
            np.array([g['vertex'] for g in gens], dtype=float),
            np.array([g['iteration'] for g in gens], dtype=int),
            np.array([g['step'] for g in gens], dtype=int),
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.generators, columns=state_columns(self.dim))
        df['k'] = self.steps
        df['iteration'] = self.iterations
        return df


def initial_convex_safe_set(goal: GoalSetData) -> ConvexSafeSetApprox:
    """
    CS^0 = O
    """
    k = len(goal.O)
    return ConvexSafeSetApprox(goal.O.vertices.copy(), np.zeros(k, dtype=int), np.full(k, -1))


def update_convex_safe_set(
    prev: ConvexSafeSetApprox,
    new_sets: Optional[SampledReachSets],
    goal: GoalSetData,
) -> ConvexSafeSetApprox:
    """Adds the vertices of an iteration's step hulls to the safe set

    input  - previous set, new reach sets (None for no data), goal set
    return - set spanning prev, the new hulls and O; duplicates dropped
    """
    logger = logging.getLogger(__name__)
    gens = [prev.generators, goal.O.vertices]
    iters = [prev.iterations, np.zeros(len(goal.O), dtype=int)]
    steps = [prev.steps, np.full(len(goal.O), -1)]
    if new_sets is not None:
        if new_sets.x0.shape[0] != prev.dim:
            raise DimensionMismatch('Reach sets and safe set differ in dimension.')
        for k, hull in enumerate(new_sets.hulls):
            gens.append(hull.vertices)
            iters.append(np.full(len(hull), new_sets.iteration))
            steps.append(np.full(len(hull), k))
    points = np.vstack(gens)
    _, first = np.unique(np.round(points / DEDUP_TOL), axis=0, return_index=True)
    keep = np.sort(first)
    cs = ConvexSafeSetApprox(points[keep], np.concatenate(iters)[keep], np.concatenate(steps)[keep])
    msg = 'Convex safe set: {} generators, {} extreme points'
    logger.info(msg.format(len(cs), len(cs.hull)))
    return cs


def epsilon_from_rollouts(cs: ConvexSafeSetApprox, rollouts: Iterable[RolloutRecord]) -> ProbabilityEstimate:
    """
    Transitions that start in cs and end outside it, over transitions that start in cs
    """
    count = 0
    trials = 0
    for r in rollouts:
        inside = [cs.contains(x) for x in r.states]
        for now, nxt in zip(inside[:-1], inside[1:]):
            if now:
                trials += 1
                count += int(not nxt)
    return ProbabilityEstimate(count, trials)


def estimate_epsilon(
    cs: ConvexSafeSetApprox,
    policy: Policy,
    sys: LtiSystem,
    goal: GoalSetData,
    x0: Sequence[float],
    M: int,
    rng: Union[np.random.Generator, int],
    t_max: int = T_MAX,
    n_steps: Optional[int] = None,
    threads: int = 1,
) -> ProbabilityEstimate:
    """Monte-Carlo escape frequency of the convex safe set

    input  - safe set, closed-loop policy, system, goal, x0, roll-out count
             rng: master seed (or generator) of the per-roll-out streams
             n_steps: fixed-length runs instead of stopping at O
    return - ProbabilityEstimate with Wilson interval
    """
    logger = logging.getLogger(__name__)
    rollouts = sample_rollouts(
        sys, goal, policy, x0, M, rng, t_max, n_steps, family='epsilon', threads=threads
    )
    est = epsilon_from_rollouts(cs, rollouts)
    msg = 'epsilon = {:.4f} ({} of {} transitions)'
    logger.info(msg.format(est.estimate, est.count, est.trials))
    return est

