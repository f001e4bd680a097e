#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Min-max finite-time optimal control on a disturbance-vertex scenario tree.

Input nodes are indexed by the disturbance prefix that reaches them, so two
leaves that share a prefix share the inputs along it. The worst case over
the leaves, the stage-cost distances and the terminal convex combination all
go into one LP.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np  # type: ignore
from scipy import sparse  # type: ignore

from ._exceptions import (
    Bootstrap0Infeasible,
    ConfigurationError,
    Infeasible,
    NoFeasiblePoint,
    NumericalFailure,
    PolicyInfeasible,
    TreeTooLarge,
)
from ._settings import FEAS_TOL, MAX_TREE_LEAVES, PROBE_MAX_ITER, PROBE_TOL, T_MAX
from .geometry import (
    Box,
    HPolytope,
    VPolytope,
    box_vertices,
    contains,
    linear_image,
    minkowski_sum,
    pontryagin_difference,
)
from .helper_functions import emit_trace
from .optkit import LinearProgram, LpStatus, solve_lp
from .plant import GoalSetData, LtiSystem, StageCost
from .value_fn import TerminalData


@dataclass(frozen=True)
class ScenarioTree:
    """Non-anticipative input nodes over disturbance-vertex sequences.

    Node ids run depth by depth; within depth k the id offset is the prefix
    read as a base-m number. Leaves are full length-N sequences.
    """

    horizon: int
    disturbances: np.ndarray
    node_depth: np.ndarray
    node_parent: np.ndarray
    node_branch: np.ndarray
    leaf_sequences: np.ndarray
    leaf_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(len(self.node_depth))

    @property
    def n_leaves(self) -> int:
        return int(len(self.leaf_sequences))

    @property
    def branching(self) -> int:
        return int(len(self.disturbances))


def _prefix_id(prefix: Sequence[int], m: int) -> int:
    depth = len(prefix)
    offset = sum(m ** i for i in range(depth))
    index = 0
    for b in prefix:
        index = index * m + int(b)
    return offset + index


def build_scenario_tree(N: int, W: Box) -> ScenarioTree:
    """Scenario tree over the vertices of W

    input  - horizon N >= 1, disturbance box
    return - ScenarioTree with sum m^i input nodes and m^N leaves
    """
    logger = logging.getLogger(__name__)
    if N < 1:
        raise ConfigurationError('Horizon must be at least 1, got {}'.format(N))
    disturbances = box_vertices(W)
    m = len(disturbances)
    if m ** N > MAX_TREE_LEAVES:
        msg = '{} disturbance vertices over horizon {} give {} leaves (limit {})'
        raise TreeTooLarge(msg.format(m, N, m ** N, MAX_TREE_LEAVES))
    depth, parent, branch = [], [], []
    for k in range(N):
        for prefix in np.ndindex(*([m] * k)):
            depth.append(k)
            parent.append(_prefix_id(prefix[:-1], m) if k else -1)
            branch.append(prefix[-1] if k else -1)
    sequences = np.array(list(np.ndindex(*([m] * N))), dtype=int).reshape(m ** N, N)
    nodes = np.array(
        [[_prefix_id(seq[:k], m) for k in range(N)] for seq in sequences], dtype=int
    )
    msg = 'Scenario tree: horizon {}, {} vertices, {} input nodes, {} leaves'
    logger.debug(msg.format(N, m, len(depth), m ** N))
    return ScenarioTree(
        N,
        disturbances,
        np.array(depth, dtype=int),
        np.array(parent, dtype=int),
        np.array(branch, dtype=int),
        sequences,
        nodes,
    )


class _SparseRows:
    """COO accumulator for constraint rows built from dense blocks."""

    def __init__(self):
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []
        self.rhs: List[np.ndarray] = []
        self.count = 0

    def add(self, blocks: Sequence[Tuple[int, np.ndarray]], rhs) -> None:
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        for col, block in blocks:
            block = np.atleast_2d(block)
            r, c = np.nonzero(block)
            self.rows.append(r + self.count)
            self.cols.append(c + col)
            self.vals.append(block[r, c])
        self.rhs.append(rhs)
        self.count += len(rhs)

    def build(self, n_cols: int):
        if not self.count:
            return None, None
        A = sparse.csr_matrix(
            (
                np.concatenate(self.vals),
                (np.concatenate(self.rows), np.concatenate(self.cols)),
            ),
            shape=(self.count, n_cols),
        )
        return A, np.concatenate(self.rhs)


class _Layout:
    """Column offsets of the FTOCP variables."""

    def __init__(self, tree: ScenarioTree, n: int, d: int, n_o: int, n_ko: int, n_td: int):
        self.n, self.d, self.n_o, self.n_ko, self.n_td = n, d, n_o, n_ko, n_td
        self.node_size = d + n + n_o + n + n_ko + d
        self.leaf_size = n + n_td
        self.leaf0 = tree.n_nodes * self.node_size
        self.tau = self.leaf0 + tree.n_leaves * self.leaf_size
        self.size = self.tau + 1

    def u(self, i: int) -> int:
        return i * self.node_size

    def x(self, i: int) -> int:
        return self.u(i) + self.d

    def mu(self, i: int) -> int:
        return self.x(i) + self.n

    def sx(self, i: int) -> int:
        return self.mu(i) + self.n_o

    def nu(self, i: int) -> int:
        return self.sx(i) + self.n

    def su(self, i: int) -> int:
        return self.nu(i) + self.n_ko

    def xT(self, leaf: int) -> int:
        return self.leaf0 + leaf * self.leaf_size

    def lam(self, leaf: int) -> int:
        return self.xT(leaf) + self.n


@dataclass
class FtocpSolution:
    status: LpStatus
    worst_case_cost: float = float('inf')
    root_input: np.ndarray = field(default_factory=lambda: np.zeros(0))
    node_inputs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    node_states: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    terminal_states: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    terminal_multipliers: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    terminal_vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


def _ftocp_lp(
    tree: ScenarioTree,
    sys: LtiSystem,
    cost: StageCost,
    V: np.ndarray,
    c: np.ndarray,
    x_t: np.ndarray,
) -> Tuple[LinearProgram, _Layout]:
    n, d = sys.n, sys.d
    OV = cost.goal.O.vertices
    KV = cost.goal.KO.vertices
    lay = _Layout(tree, n, d, len(OV), len(KV), len(V))
    eq = _SparseRows()
    ineq = _SparseRows()
    I_n, I_d = np.eye(n), np.eye(d)
    A, B = sys.A, sys.B
    for i in range(tree.n_nodes):
        p = tree.node_parent[i]
        if p < 0:
            eq.add([(lay.x(i), I_n)], x_t)
        else:
            w = tree.disturbances[tree.node_branch[i]]
            eq.add([(lay.x(i), I_n), (lay.x(p), -A), (lay.u(p), -B)], w)
            ineq.add([(lay.x(i), sys.X.F)], sys.X.g)
        ineq.add([(lay.u(i), sys.U.F)], sys.U.g)
        # 1-norm distance epigraphs: |x - O'mu| <= sx, |u - KO'nu| <= su
        ineq.add([(lay.x(i), I_n), (lay.mu(i), -OV.T), (lay.sx(i), -I_n)], np.zeros(n))
        ineq.add([(lay.x(i), -I_n), (lay.mu(i), OV.T), (lay.sx(i), -I_n)], np.zeros(n))
        ineq.add([(lay.u(i), I_d), (lay.nu(i), -KV.T), (lay.su(i), -I_d)], np.zeros(d))
        ineq.add([(lay.u(i), -I_d), (lay.nu(i), KV.T), (lay.su(i), -I_d)], np.zeros(d))
        eq.add([(lay.mu(i), np.ones((1, len(OV))))], 1.0)
        eq.add([(lay.nu(i), np.ones((1, len(KV))))], 1.0)
    qx = np.full((1, n), cost.state_weight)
    qu = np.full((1, d), cost.input_weight)
    for leaf in range(tree.n_leaves):
        last = tree.leaf_nodes[leaf, -1]
        w = tree.disturbances[tree.leaf_sequences[leaf, -1]]
        eq.add([(lay.xT(leaf), I_n), (lay.x(last), -A), (lay.u(last), -B)], w)
        eq.add([(lay.xT(leaf), I_n), (lay.lam(leaf), -V.T)], np.zeros(n))
        eq.add([(lay.lam(leaf), np.ones((1, len(V))))], 1.0)
        blocks = [(lay.lam(leaf), c[None, :]), (lay.tau, -np.ones((1, 1)))]
        for i in tree.leaf_nodes[leaf]:
            blocks.append((lay.sx(i), qx))
            blocks.append((lay.su(i), qu))
        ineq.add(blocks, 0.0)
    # u, x, xT and tau are free; multipliers and slacks nonnegative
    lb = np.full(lay.size, -np.inf)
    for i in range(tree.n_nodes):
        lb[lay.mu(i):lay.u(i) + lay.node_size] = 0.0
    for leaf in range(tree.n_leaves):
        lb[lay.lam(leaf):lay.lam(leaf) + len(V)] = 0.0
    bounds = [(None if np.isinf(lo) else lo, None) for lo in lb]
    cvec = np.zeros(lay.size)
    cvec[lay.tau] = 1.0
    G, h = ineq.build(lay.size)
    F, g = eq.build(lay.size)
    return LinearProgram(cvec, G=G, h=h, F=F, g=g, bounds=bounds), lay


def solve_ftocp(
    tree: ScenarioTree,
    sys: LtiSystem,
    cost: StageCost,
    td: TerminalData,
    x_t: Sequence[float],
) -> FtocpSolution:
    """Min over node inputs of the max over leaves of stage costs plus Q

    input  - scenario tree, system, stage cost, terminal data, current state
    return - FtocpSolution; status Infeasible when no non-anticipative
             input tree keeps every leaf admissible and ends in the safe set
    """
    logger = logging.getLogger(__name__)
    x_t = np.asarray(x_t, dtype=float)
    if not np.all(np.isfinite(x_t)):
        raise NumericalFailure('Non-finite state {}'.format(x_t.tolist()))
    if not contains(sys.X, x_t, FEAS_TOL):
        emit_trace({'event': 'ftocp', 'state': x_t.tolist(), 'status': 'Infeasible',
                    'variables': 0, 'rows': 0, 'seconds': 0.0})
        return FtocpSolution(LpStatus.INFEASIBLE)
    V, c = td.reduced
    lp, lay = _ftocp_lp(tree, sys, cost, V, c, x_t)
    start = time.perf_counter()
    sol = solve_lp(lp)
    seconds = time.perf_counter() - start
    emit_trace({
        'event': 'ftocp',
        'state': x_t.tolist(),
        'status': sol.status.value,
        'variables': lp.n_variables,
        'rows': lp.n_rows,
        'seconds': seconds,
    })
    if sol.status == LpStatus.UNBOUNDED:
        raise NumericalFailure('FTOCP is unbounded at {}'.format(x_t.tolist()))
    if not sol.optimal:
        logger.debug('FTOCP infeasible at {}'.format(x_t.tolist()))
        return FtocpSolution(sol.status)
    z = sol.z
    d, n = sys.d, sys.n
    inputs = np.array([z[lay.u(i):lay.u(i) + d] for i in range(tree.n_nodes)])
    states = np.array([z[lay.x(i):lay.x(i) + n] for i in range(tree.n_nodes)])
    terminal = np.array([z[lay.xT(l):lay.xT(l) + n] for l in range(tree.n_leaves)])
    lam = np.array([z[lay.lam(l):lay.lam(l) + len(V)] for l in range(tree.n_leaves)])
    return FtocpSolution(
        LpStatus.OPTIMAL,
        float(z[lay.tau]),
        inputs[0].copy(),
        inputs,
        states,
        terminal,
        lam,
        V,
    )


@dataclass(frozen=True)
class LmpcPolicy:
    """Receding-horizon policy: first input of the FTOCP at each state."""

    tree: ScenarioTree
    sys: LtiSystem
    cost: StageCost
    td: TerminalData

    def solve(self, x: Sequence[float]) -> FtocpSolution:
        return solve_ftocp(self.tree, self.sys, self.cost, self.td, x)

    def value(self, x: Sequence[float]) -> float:
        sol = self.solve(x)
        if not sol.optimal:
            raise PolicyInfeasible(x)
        return sol.worst_case_cost

    def __call__(self, x: Sequence[float], t: Optional[int] = None) -> np.ndarray:
        sol = self.solve(x)
        if not sol.optimal:
            raise PolicyInfeasible(x, t)
        return sol.root_input


def policy(
    tree: ScenarioTree,
    sys: LtiSystem,
    cost: StageCost,
    td: TerminalData,
    x_t: Sequence[float],
) -> np.ndarray:
    return LmpcPolicy(tree, sys, cost, td)(x_t)


def _ray_length(X: HPolytope, unit: np.ndarray) -> float:
    """
    Largest s with s * unit in X
    """
    rates = X.F @ unit
    pos = rates > 1e-12
    return float(np.min(X.g[pos] / rates[pos]))


def frontier_probe(
    tree: ScenarioTree,
    sys: LtiSystem,
    cost: StageCost,
    td: TerminalData,
    direction: Sequence[float],
    ortho: Sequence[float],
    tol: float = PROBE_TOL,
    max_iter: int = PROBE_MAX_ITER,
) -> np.ndarray:
    """Furthest FTOCP-feasible state along a ray through the origin

    input  - scenario tree, system, cost, terminal data, direction a and a
             perpendicular a_perp fixing the ray
    return - x0 = s * a / |a| with the largest feasible s (to tol)
    """
    logger = logging.getLogger(__name__)
    a = np.asarray(direction, dtype=float)
    a_perp = np.asarray(ortho, dtype=float)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ConfigurationError('Exploration direction must be nonzero.')
    if abs(a @ a_perp) > 1e-9 * norm * max(1.0, np.linalg.norm(a_perp)):
        raise ConfigurationError('Exploration direction and its orthogonal complement are not orthogonal.')
    unit = a / norm

    def feasible(s: float) -> bool:
        return solve_ftocp(tree, sys, cost, td, s * unit).optimal

    start = time.perf_counter()
    if not feasible(0.0):
        raise NoFeasiblePoint('The FTOCP is infeasible even at the origin.')
    lo, hi = 0.0, _ray_length(sys.X, unit)
    iterations = 0
    if feasible(hi):
        lo = hi
    else:
        while hi - lo > tol and iterations < max_iter:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
            iterations += 1
    x0 = lo * unit
    emit_trace({
        'event': 'probe',
        'direction': a.tolist(),
        'state': x0.tolist(),
        'iterations': iterations,
        'seconds': time.perf_counter() - start,
    })
    msg = 'Frontier probe along {}: x0 = {} after {} bisections'
    logger.info(msg.format(a.tolist(), np.round(x0, 4).tolist(), iterations))
    return x0


@dataclass(frozen=True)
class NominalPlan:
    states: np.ndarray
    inputs: np.ndarray

    @property
    def horizon(self) -> int:
        return int(len(self.inputs))


def tube_error_sets(sys: LtiSystem, K: np.ndarray, horizon: int) -> List[VPolytope]:
    """
    E_0 = {0}, E_{k+1} = E_k + (A+BK)^k W; x_k - z_k stays in E_k under the tube law
    """
    Acl = sys.A + sys.B @ K
    Wv = VPolytope(box_vertices(sys.W))
    sets = [VPolytope(np.zeros((1, sys.n)))]
    power = np.eye(sys.n)
    for _ in range(horizon):
        sets.append(minkowski_sum(sets[-1], linear_image(Wv, power)))
        power = Acl @ power
    return sets


def solve_nominal_plan(
    sys: LtiSystem, goal: GoalSetData, cost: StageCost, x0: Sequence[float], horizon: int
) -> NominalPlan:
    """Nominal trajectory ending at 0 in stage-wise tightened constraints

    input  - system, goal set, stage cost weights, x0, horizon
    return - NominalPlan (z_0..z_N, v_0..v_{N-1}) minimizing the weighted
             1-norms of z and v; z_k in X - E_k and v_k in U - KE_k
    """
    n, d, N = sys.n, sys.d, horizon
    K = np.atleast_2d(goal.K)
    errors = tube_error_sets(sys, K, N)
    # variables: z (N+1)n, v Nd, sz (N+1)n, sv Nd
    nz, nv = (N + 1) * n, N * d
    size = 2 * (nz + nv)
    z0, v0, sz0, sv0 = 0, nz, nz + nv, 2 * nz + nv
    eq = _SparseRows()
    ineq = _SparseRows()
    I_n, I_d = np.eye(n), np.eye(d)
    eq.add([(z0, I_n)], np.asarray(x0, dtype=float))
    for k in range(N):
        eq.add([(z0 + (k + 1) * n, I_n), (z0 + k * n, -sys.A), (v0 + k * d, -sys.B)], np.zeros(n))
        Ut = pontryagin_difference(sys.U, linear_image(errors[k], K))
        ineq.add([(v0 + k * d, Ut.F)], Ut.g)
        ineq.add([(v0 + k * d, I_d), (sv0 + k * d, -I_d)], np.zeros(d))
        ineq.add([(v0 + k * d, -I_d), (sv0 + k * d, -I_d)], np.zeros(d))
    for k in range(1, N):
        Xt = pontryagin_difference(sys.X, errors[k])
        ineq.add([(z0 + k * n, Xt.F)], Xt.g)
    for k in range(N + 1):
        ineq.add([(z0 + k * n, I_n), (sz0 + k * n, -I_n)], np.zeros(n))
        ineq.add([(z0 + k * n, -I_n), (sz0 + k * n, -I_n)], np.zeros(n))
    eq.add([(z0 + N * n, I_n)], np.zeros(n))
    cvec = np.zeros(size)
    cvec[sz0:sv0] = cost.state_weight
    cvec[sv0:] = cost.input_weight
    G, h = ineq.build(size)
    F, g = eq.build(size)
    sol = solve_lp(LinearProgram(cvec, G=G, h=h, F=F, g=g))
    if not sol.optimal:
        raise Infeasible('No nominal plan of length {} from {}'.format(N, list(x0)))
    z = sol.z
    return NominalPlan(z[z0:v0].reshape(N + 1, n), z[v0:sz0].reshape(N, d))


@dataclass(frozen=True)
class TubePolicy:
    """u = v_t + K(x - z_t) along the nominal plan, u = Kx afterwards."""

    plan: NominalPlan
    K: np.ndarray

    def __call__(self, x: Sequence[float], t: Optional[int] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        K = np.atleast_2d(self.K)
        if t is not None and t < self.plan.horizon:
            return self.plan.inputs[t] + K @ (x - self.plan.states[t])
        return K @ x


def build_tube_policy(
    sys: LtiSystem,
    goal: GoalSetData,
    cost: StageCost,
    x0: Sequence[float],
    horizon: int,
    t_max: int = T_MAX,
) -> TubePolicy:
    """
    Tube controller with the shortest feasible horizon found by doubling
    """
    logger = logging.getLogger(__name__)
    if not contains(sys.X, x0, FEAS_TOL):
        raise Bootstrap0Infeasible('Initial state {} violates the state constraints.'.format(list(x0)))
    N = max(1, horizon)
    while True:
        try:
            plan = solve_nominal_plan(sys, goal, cost, x0, N)
        except Infeasible:
            if N >= t_max:
                msg = 'No tube plan from {} within {} steps'
                raise Bootstrap0Infeasible(msg.format(list(x0), t_max))
            N = min(2 * N, t_max)
            continue
        except ConfigurationError as exc:
            raise Bootstrap0Infeasible('Tightened constraint sets are empty: {}'.format(exc))
        logger.info('Tube bootstrap plan found with horizon {}'.format(N))
        return TubePolicy(plan, np.atleast_2d(goal.K))
