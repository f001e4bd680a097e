#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Learning campaigns: collect roll-outs, grow the safe set, probe x0.

Every roll-out draws from its own random stream, seeded from
(master_seed, mode, family, iteration, index), so serial and pooled runs
produce the same data. Iteration directories are written under the output
directory as iter_00, iter_01, ...
"""
import os
import logging
import time
import concurrent.futures as cf
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from rich.progress import track

from ._exceptions import AssumptionViolation, ConfigurationError
from ._settings import COST_STUDY_WEIGHTS, DEFAULTS, MAX_TREE_LEAVES
from .configuration import parse_grid, system_from_config
from .geometry import to_dict
from .helper_functions import (
    derive_seed,
    json_reader,
    json_writer,
    state_columns,
    worker_init,
)
from .lmpc import (
    LmpcPolicy,
    ScenarioTree,
    build_scenario_tree,
    build_tube_policy,
    frontier_probe,
    solve_ftocp,
)
from .plant import (
    GoalSetData,
    LtiSystem,
    StageCost,
    build_goal_set,
    check_assumption1,
    dlqr_gain,
    spectral_radius,
)
from .safe_set import (
    ConvexSafeSetApprox,
    ProbabilityEstimate,
    Policy,
    RolloutRecord,
    build_reach_sets,
    epsilon_from_rollouts,
    initial_convex_safe_set,
    simulate_rollout,
    update_convex_safe_set,
    write_rollouts,
)
from .value_fn import (
    CostHyperplane,
    PlaneKey,
    TerminalData,
    build_terminal_data,
    compare_surfaces,
    fit_iteration_planes,
    gamma_from_rollouts,
    goal_terminal_data,
    lyapunov_decrease_fraction,
    q_surface,
    realized_cost_to_go,
)

STUDY_ALIASES = {'epsilon_study': 'epsilon_gamma', 'gamma_study': 'epsilon_gamma'}
COST_STUDY_X0 = (-9.9, 0.0)


@dataclass
class CampaignConfig:
    system: LtiSystem
    horizon: int = DEFAULTS['horizon']
    rollouts_per_iteration: int = DEFAULTS['rollouts_per_iteration']
    iterations: int = DEFAULTS['iterations']
    direction: Sequence[float] = tuple(DEFAULTS['direction'])
    ortho: Sequence[float] = tuple(DEFAULTS['ortho'])
    weights: Optional[Sequence[float]] = None
    lqr_weights: Sequence[float] = tuple(DEFAULTS['lqr_weights'])
    master_seed: int = DEFAULTS['master_seed']
    t_max: int = DEFAULTS['t_max']
    mode: str = DEFAULTS['mode']
    out: Optional[str] = None
    x0: Optional[Sequence[float]] = None
    evaluation_rollouts: int = DEFAULTS['evaluation_rollouts']
    small_rollouts: int = DEFAULTS['small_rollouts']
    threads: int = DEFAULTS['threads']
    q_grid: Optional[List[np.ndarray]] = None
    probe_tol: float = DEFAULTS['probe_tol']
    bootstrap_horizon: int = DEFAULTS['bootstrap_horizon']
    trace: Optional[str] = None

    def __post_init__(self):
        if self.weights is None:
            chosen = COST_STUDY_WEIGHTS if self.study == 'cost_study' else DEFAULTS['weights']
            self.weights = tuple(chosen)

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> 'CampaignConfig':
        """
        Builds a config from resolved settings (see validate_arguments)
        """
        known = set(cls.__dataclass_fields__) - {'system', 'q_grid'}
        kwargs = {k: v for k, v in settings.items() if k in known and v is not None}
        config = cls(
            system=system_from_config(settings),
            q_grid=parse_grid(settings.get('q_grid')),
            **kwargs
        )
        config.validate()
        return config

    @property
    def study(self) -> str:
        return STUDY_ALIASES.get(self.mode, self.mode)

    def validate(self) -> None:
        logger = logging.getLogger(__name__)
        problems = []
        if self.horizon < 1:
            problems.append('horizon must be >= 1')
        if self.rollouts_per_iteration < 1:
            problems.append('rollouts_per_iteration must be >= 1')
        if self.iterations < 0:
            problems.append('iterations must be >= 0')
        if self.t_max < 1:
            problems.append('t_max must be >= 1')
        if len(self.weights) != 2 or min(self.weights) <= 0:
            problems.append('weights must be two positive numbers (q_x, q_u)')
        if len(self.lqr_weights) != 2 or self.lqr_weights[0] < 0 or self.lqr_weights[1] <= 0:
            problems.append('lqr_weights must be (q >= 0, r > 0)')
        if self.study not in ('explore', 'cost_study', 'epsilon_gamma'):
            problems.append('unknown mode "{}"'.format(self.mode))
        n = self.system.n
        if self.study in ('explore', 'epsilon_gamma') and self.x0 is None:
            if len(self.direction) != n or len(self.ortho) != n:
                problems.append('direction and ortho must have {} components'.format(n))
        if self.x0 is not None and len(self.x0) != n:
            problems.append('x0 must have {} components'.format(n))
        if self.study == 'cost_study' and self.x0 is None and n != 2:
            problems.append('cost_study needs x0 for a {}-state system'.format(n))
        if self.study == 'epsilon_gamma':
            if not 1 <= self.small_rollouts <= self.rollouts_per_iteration:
                problems.append('small_rollouts must lie in [1, rollouts_per_iteration]')
            if self.evaluation_rollouts < 1:
                problems.append('evaluation_rollouts must be >= 1')
        if self.evaluation_rollouts < 0:
            problems.append('evaluation_rollouts must be >= 0')
        if self.threads < 1:
            problems.append('threads must be >= 1')
        for problem in problems:
            logger.error('Invalid configuration: {}'.format(problem))
        if problems:
            raise ConfigurationError('; '.join(problems))


@dataclass
class IterationReport:
    iteration: int
    x0: List[float]
    costs: List[float]
    safe_set_vertices: int
    generators: int
    terminal_pairs: int
    max_time_to_goal: int
    constraint_violations: int
    epsilon: Optional[Dict[str, Any]] = None
    gamma: Optional[Dict[str, Any]] = None
    wall_clock: float = 0.0

    @property
    def worst_case_cost(self) -> float:
        return max(self.costs)

    def to_dict(self) -> Dict[str, Any]:
        """
        Report without wall-clock time; equal seeds give equal files
        """
        return {
            'iteration': self.iteration,
            'x0': self.x0,
            'worst_case_cost': self.worst_case_cost,
            'mean_cost': float(np.mean(self.costs)),
            'costs': self.costs,
            'safe_set_vertices': self.safe_set_vertices,
            'generators': self.generators,
            'terminal_pairs': self.terminal_pairs,
            'max_time_to_goal': self.max_time_to_goal,
            'constraint_violations': self.constraint_violations,
            'epsilon': self.epsilon,
            'gamma': self.gamma,
        }

    def summary_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {'iteration': self.iteration}
        for name, value in zip(state_columns(len(self.x0)), self.x0):
            row['x0_' + name] = value
        row['worst_case_cost'] = self.worst_case_cost
        row['mean_cost'] = float(np.mean(self.costs))
        row['rollouts'] = len(self.costs)
        row['safe_set_vertices'] = self.safe_set_vertices
        row['max_time_to_goal'] = self.max_time_to_goal
        row['constraint_violations'] = self.constraint_violations
        for name, est in (('epsilon', self.epsilon), ('gamma', self.gamma)):
            if est is not None:
                row[name] = est['estimate']
                row[name + '_low'] = est['wilson_low']
                row[name + '_high'] = est['wilson_high']
        return row


@dataclass
class CampaignState:
    config: CampaignConfig
    goal: GoalSetData
    cost: StageCost
    tree: ScenarioTree
    cs: ConvexSafeSetApprox
    td: TerminalData
    planes: Dict[PlaneKey, CostHyperplane] = field(default_factory=dict)
    reports: List[IterationReport] = field(default_factory=list)

    @property
    def sys(self) -> LtiSystem:
        return self.config.system


def build_state(config: CampaignConfig) -> CampaignState:
    """LQR gain, goal set, stage cost and the iteration-0 safe set

    input  - validated CampaignConfig
    return - CampaignState with CS^0 = O and Q^0 = 0
    """
    logger = logging.getLogger(__name__)
    sys = config.system
    q, r = config.lqr_weights
    K, _ = dlqr_gain(sys.A, sys.B, q * np.eye(sys.n), r * np.eye(sys.d))
    msg = 'LQR gain K = {} (closed-loop spectral radius {:.4f})'
    logger.info(msg.format(np.round(K, 4).tolist(), spectral_radius(sys.A + sys.B @ K)))
    goal = build_goal_set(sys, K)
    if not check_assumption1(goal, sys.U):
        raise AssumptionViolation('The goal set is not robustly invariant with admissible Kx.')
    cost = StageCost(float(config.weights[0]), float(config.weights[1]), goal)
    tree = build_scenario_tree(config.horizon, sys.W)
    return CampaignState(
        config, goal, cost, tree, initial_convex_safe_set(goal), goal_terminal_data(goal)
    )


def _rollout_task(task: Tuple) -> RolloutRecord:
    sys, cost, policy, x0, seed, t_max, iteration, index = task
    rng = np.random.default_rng(seed)
    record = simulate_rollout(sys, cost.goal, policy, x0, rng, t_max)
    record.iteration = iteration
    record.index = index
    record.seed = seed
    record.cost_to_go = realized_cost_to_go(record, cost)
    return record


def collect_rollouts(
    state: CampaignState,
    policy: Policy,
    x0: Sequence[float],
    iteration: int,
    count: int,
    family: str = 'rollout',
) -> List[RolloutRecord]:
    """Seeded closed-loop roll-outs, pooled when threads > 1

    input  - campaign state, policy, x0, iteration index, number of roll-outs
             family: seed family; evaluation runs use their own
    return - roll-outs in index order
    """
    logger = logging.getLogger(__name__)
    config = state.config
    tasks = [
        (
            state.sys,
            state.cost,
            policy,
            np.asarray(x0, dtype=float),
            derive_seed(config.master_seed, config.study, family, iteration, i),
            config.t_max,
            iteration,
            i,
        )
        for i in range(count)
    ]
    msg = 'Running {} {} roll-outs for iteration {} using {} CPUs.'
    logger.info(msg.format(count, family, iteration, config.threads))
    if config.threads <= 1:
        return [_rollout_task(t) for t in track(tasks, 'Roll-outs...', count)]
    p: cf.ProcessPoolExecutor = cf.ProcessPoolExecutor(
        config.threads, initializer=worker_init, initargs=(os.getpid(), config.trace)
    )
    chunksize = max(1, count // (4 * config.threads))
    with p:
        return list(track(p.map(_rollout_task, tasks, chunksize=chunksize), 'Roll-outs...', count))


def _iteration_dir(config: CampaignConfig, j: int) -> Optional[str]:
    if not config.out:
        return None
    path = os.path.join(config.out, 'iter_{:02d}'.format(j))
    os.makedirs(path, exist_ok=True)
    return path


def persist_iteration(
    state: CampaignState,
    j: int,
    rollouts: Sequence[RolloutRecord],
    report: Optional[IterationReport],
    planes: Dict[PlaneKey, CostHyperplane],
) -> None:
    """
    Writes roll-outs, safe set, terminal data, planes and reports of one iteration
    """
    logger = logging.getLogger(__name__)
    path = _iteration_dir(state.config, j)
    if path is None:
        return
    if rollouts:
        write_rollouts(os.path.join(path, 'rollouts.jsonl'), rollouts)
    json_writer(os.path.join(path, 'safe_set.json'), state.cs.to_dict())
    state.cs.to_frame().to_csv(os.path.join(path, 'safe_set.csv'), index=False)
    json_writer(os.path.join(path, 'terminal_data.json'), state.td.to_dict())
    if planes:
        json_writer(os.path.join(path, 'hyperplanes.json'), [p.to_dict() for p in planes.values()])
    if report is not None:
        json_writer(os.path.join(path, 'report.json'), report.to_dict())
        json_writer(os.path.join(path, 'timing.json'), {'wall_clock': report.wall_clock})
    if state.config.q_grid is not None:
        q_surface(state.td, state.config.q_grid).to_csv(os.path.join(path, 'q_surface.csv'), index=False)
    logger.debug('Iteration {} artifacts written to {}'.format(j, path))


def absorb_rollouts(
    state: CampaignState,
    rollouts: Sequence[RolloutRecord],
    j: int,
    x0: Sequence[float],
    started: float,
    epsilon: Optional[ProbabilityEstimate] = None,
    gamma: Optional[ProbabilityEstimate] = None,
) -> IterationReport:
    """Updates the safe set and terminal data with one iteration of data

    input  - campaign state, completed roll-outs of iteration j, x0, start time
             epsilon, gamma: evaluation estimates against the sets the
             iteration ran on
    return - IterationReport (state.cs, state.td and state.planes updated)
    """
    logger = logging.getLogger(__name__)
    violations = sum(r.constraint_violations(state.sys) for r in rollouts)
    if violations:
        logger.warning('{} state/input constraint violations in iteration {}'.format(violations, j))
    sets = build_reach_sets(rollouts)
    planes = fit_iteration_planes(rollouts, j)
    state.planes.update(planes)
    previous = state.cs
    state.cs = update_convex_safe_set(previous, sets, state.goal)
    if not state.cs.covers(previous):
        logger.warning('Safe set of iteration {} does not cover its predecessor.'.format(j))
    state.td = build_terminal_data(state.cs, state.planes)
    report = IterationReport(
        iteration=j,
        x0=[float(v) for v in x0],
        costs=[r.total_cost for r in rollouts],
        safe_set_vertices=len(state.cs.hull),
        generators=len(state.cs),
        terminal_pairs=len(state.td),
        max_time_to_goal=max(r.time_to_goal for r in rollouts),
        constraint_violations=int(violations),
        epsilon=epsilon.to_dict() if epsilon is not None else None,
        gamma=gamma.to_dict() if gamma is not None else None,
        wall_clock=time.perf_counter() - started,
    )
    state.reports.append(report)
    persist_iteration(state, j, rollouts, report, planes)
    msg = 'Iteration {}: x0 = {}, worst-case realized cost {:.4f}, {} safe-set vertices'
    logger.info(msg.format(j, np.round(x0, 3).tolist(), report.worst_case_cost, report.safe_set_vertices))
    return report


def evaluate_iteration(
    state: CampaignState, policy: Policy, x0: Sequence[float], j: int
) -> Tuple[Optional[ProbabilityEstimate], Optional[ProbabilityEstimate]]:
    """Escape and decrease-failure rates of the sets iteration j runs on

    input  - campaign state before the update, the iteration's policy, x0, j
    return - (epsilon, gamma), both None when evaluation_rollouts is 0
    """
    logger = logging.getLogger(__name__)
    count = state.config.evaluation_rollouts
    if count < 1:
        return None, None
    evaluation = collect_rollouts(state, policy, x0, j, count, 'evaluation')
    eps = epsilon_from_rollouts(state.cs, evaluation)
    gam = gamma_from_rollouts(state.td, state.cost, evaluation)
    msg = 'Iteration {}: epsilon {:.2%} [{:.2%}, {:.2%}], gamma {:.2%} [{:.2%}, {:.2%}]'
    logger.info(msg.format(j, eps.estimate, *eps.interval, gam.estimate, *gam.interval))
    path = _iteration_dir(state.config, j)
    if path is not None:
        write_rollouts(os.path.join(path, 'evaluation.jsonl'), evaluation)
    return eps, gam


def run_iteration(state: CampaignState, j: int, x0: Optional[Sequence[float]] = None) -> IterationReport:
    """One learning iteration under the LMPC policy built on iteration j-1 data

    input  - campaign state, iteration index j >= 1, fixed x0 (probed if None)
    return - IterationReport
    """
    config = state.config
    started = time.perf_counter()
    policy = LmpcPolicy(state.tree, state.sys, state.cost, state.td)
    if x0 is None:
        x0 = config.x0
    if x0 is None:
        x0 = frontier_probe(
            state.tree, state.sys, state.cost, state.td, config.direction, config.ortho, config.probe_tol
        )
    rollouts = collect_rollouts(state, policy, x0, j, config.rollouts_per_iteration)
    epsilon, gamma = evaluate_iteration(state, policy, x0, j)
    return absorb_rollouts(state, rollouts, j, x0, started, epsilon, gamma)


def write_summary(config: CampaignConfig, reports: Sequence[IterationReport]) -> None:
    if not config.out or not reports:
        return
    df = pd.DataFrame([r.summary_row() for r in reports])
    df.to_csv(os.path.join(config.out, 'summary.csv'), index=False)


def run_campaign(config: CampaignConfig) -> List[IterationReport]:
    """Exploration campaign: probe x0 along the direction, learn, repeat

    input  - CampaignConfig
    return - one IterationReport per iteration 1..J
    """
    logger = logging.getLogger(__name__)
    state = build_state(config)
    persist_iteration(state, 0, [], None, {})
    a = np.asarray(config.direction, dtype=float)
    a = a / np.linalg.norm(a)
    reports = []
    for j in range(1, config.iterations + 1):
        report = run_iteration(state, j)
        if reports and a @ report.x0 < a @ reports[-1].x0 - 2 * config.probe_tol:
            msg = 'x0 retreated along the exploration direction at iteration {}'
            logger.warning(msg.format(j))
        reports.append(report)
    write_summary(config, reports)
    if config.out and reports:
        rows = []
        for r in reports:
            row = {'iteration': r.iteration}
            row.update(dict(zip(state_columns(len(r.x0)), r.x0)))
            row['progress'] = float(a @ r.x0)
            rows.append(row)
        pd.DataFrame(rows).to_csv(os.path.join(config.out, 'initial_conditions.csv'), index=False)
    return reports


def bootstrap_policy(state: CampaignState, x0: Sequence[float]) -> Policy:
    """Iteration-0 controller for a fixed x0

    input  - campaign state, x0
    return - scenario-tree LMPC on O at the shortest doubled horizon that is
             feasible within the tree guard, else the tube controller
    """
    logger = logging.getLogger(__name__)
    sys, config = state.sys, state.config
    td0 = goal_terminal_data(state.goal)
    N = config.horizon
    m = state.tree.branching
    while m ** N <= MAX_TREE_LEAVES:
        tree = build_scenario_tree(N, sys.W)
        if solve_ftocp(tree, sys, state.cost, td0, x0).optimal:
            logger.info('Iteration-0 controller: scenario-tree LMPC with horizon {}'.format(N))
            return LmpcPolicy(tree, sys, state.cost, td0)
        if m == 1:
            break
        N *= 2
    logger.info('Scenario-tree bootstrap infeasible within the tree guard; using the tube controller.')
    return build_tube_policy(sys, state.goal, state.cost, x0, config.bootstrap_horizon, config.t_max)


def cost_study(config: CampaignConfig) -> List[IterationReport]:
    """Repeated task from a fixed x0, seeded by a suboptimal iteration 0

    input  - CampaignConfig (x0 defaults to (-9.9, 0))
    return - reports for iterations 0..J
    """
    logger = logging.getLogger(__name__)
    x0 = np.asarray(config.x0 if config.x0 is not None else COST_STUDY_X0, dtype=float)
    state = build_state(config)
    started = time.perf_counter()
    boot = bootstrap_policy(state, x0)
    rollouts = collect_rollouts(state, boot, x0, 0, config.rollouts_per_iteration)
    reports = [absorb_rollouts(state, rollouts, 0, x0, started)]
    for j in range(1, config.iterations + 1):
        reports.append(run_iteration(state, j, x0))
        prev, now = reports[-2].worst_case_cost, reports[-1].worst_case_cost
        msg = 'Worst-case realized cost {:.4f} -> {:.4f} ({:+.2%})'
        logger.info(msg.format(prev, now, (now - prev) / prev if prev else 0.0))
    write_summary(config, reports)
    return reports


def epsilon_gamma_study(config: CampaignConfig) -> Dict[str, Any]:
    """Safe-set escape and Q decrease-failure frequencies for two data sizes

    input  - CampaignConfig; small_rollouts is a prefix of rollouts_per_iteration
    return - report with estimates, Wilson intervals and the containment check
    """
    logger = logging.getLogger(__name__)
    state = build_state(config)
    cs0, td0 = state.cs, state.td
    policy = LmpcPolicy(state.tree, state.sys, state.cost, td0)
    x0 = config.x0
    if x0 is None:
        x0 = frontier_probe(
            state.tree, state.sys, state.cost, td0, config.direction, config.ortho, config.probe_tol
        )
    x0 = np.asarray(x0, dtype=float)
    data = collect_rollouts(state, policy, x0, 1, config.rollouts_per_iteration)
    evaluation = collect_rollouts(state, policy, x0, 1, config.evaluation_rollouts, 'evaluation')
    sizes = sorted({config.small_rollouts, config.rollouts_per_iteration})
    results: Dict[str, Any] = {'x0': x0.tolist(), 'evaluation_rollouts': len(evaluation), 'studies': []}
    learned = {}
    for R in sizes:
        subset = data[:R]
        cs = update_convex_safe_set(cs0, build_reach_sets(subset), state.goal)
        td = build_terminal_data(cs, fit_iteration_planes(subset, 1))
        eps = epsilon_from_rollouts(cs, evaluation)
        gam = gamma_from_rollouts(td, state.cost, evaluation)
        learned[R] = (cs, td)
        results['studies'].append({
            'rollouts': R,
            'epsilon': eps.to_dict(),
            'gamma': gam.to_dict(),
            'safe_set_vertices': len(cs.hull),
        })
        msg = 'R = {}: epsilon {:.2%} [{:.2%}, {:.2%}], gamma {:.2%} [{:.2%}, {:.2%}]'
        logger.info(msg.format(R, eps.estimate, *eps.interval, gam.estimate, *gam.interval))
        if config.out:
            path = os.path.join(config.out, 'epsilon_gamma')
            os.makedirs(path, exist_ok=True)
            json_writer(os.path.join(path, 'safe_set_R{}.json'.format(R)), cs.to_dict())
            json_writer(os.path.join(path, 'terminal_data_R{}.json'.format(R)), td.to_dict())
    small, large = learned[sizes[0]], learned[sizes[-1]]
    results['large_covers_small'] = bool(large[0].covers(small[0]))
    lyap = lyapunov_decrease_fraction(policy.value, state.cost, evaluation[:config.small_rollouts])
    results['lyapunov_decrease'] = lyap.to_dict()
    if config.q_grid is not None:
        results['surface_comparison'] = compare_surfaces(small[1], large[1], config.q_grid)
    if config.out:
        path = os.path.join(config.out, 'epsilon_gamma')
        os.makedirs(path, exist_ok=True)
        write_rollouts(os.path.join(path, 'rollouts.jsonl'), data)
        write_rollouts(os.path.join(path, 'evaluation.jsonl'), evaluation)
        json_writer(os.path.join(path, 'report.json'), results)
    return results


def run_mode(config: CampaignConfig) -> Any:
    if config.study == 'cost_study':
        return cost_study(config)
    if config.study == 'epsilon_gamma':
        return epsilon_gamma_study(config)
    return run_campaign(config)


def check_configuration(config: CampaignConfig) -> Dict[str, Any]:
    """Numerical check of the goal-set assumptions

    input  - CampaignConfig
    return - summary of K, O and the invariance margin
    """
    sys = config.system
    q, r = config.lqr_weights
    K, P = dlqr_gain(sys.A, sys.B, q * np.eye(sys.n), r * np.eye(sys.d))
    goal = build_goal_set(sys, K)
    return {
        'K': K.tolist(),
        'spectral_radius': spectral_radius(sys.A + sys.B @ K),
        'goal_set': to_dict(goal.O),
        'input_image': to_dict(goal.KO),
        'invariance_margin': goal.invariance_margin,
        'assumption_holds': bool(check_assumption1(goal, sys.U)),
        'scenario_leaves': len(build_scenario_tree(config.horizon, sys.W).leaf_sequences),
    }


def evaluate_q_surface(terminal_data: str, grid: Any, out_csv: Optional[str] = None) -> pd.DataFrame:
    """
    Q on a grid from a stored terminal_data.json
    """
    td = TerminalData.from_dict(json_reader(terminal_data))
    df = q_surface(td, parse_grid(grid))
    if out_csv:
        df.to_csv(out_csv, index=False)
    return df
