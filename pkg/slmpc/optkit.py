#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Dense LP and inequality-constrained least-squares kernel.

Every other module funnels its optimization through solve_lp (HiGHS via
scipy) or solve_cls (OSQP with solution polishing).
"""
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from importlib.metadata import version as dist_version
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np  # type: ignore
import osqp  # type: ignore
import packaging.version as pv
from scipy import sparse  # type: ignore
from scipy.optimize import linprog  # type: ignore

from ._exceptions import DimensionMismatch, Infeasible, NumericalFailure
from ._settings import FEAS_TOL, KKT_TOL

Matrix = Union[np.ndarray, sparse.spmatrix]
Bound = Tuple[Optional[float], Optional[float]]

# OSQP renamed the polish switch in the 1.0 series; the refine count kept its name.
_OSQP_V1: bool = pv.parse(dist_version('osqp')) >= pv.parse('1.0.0')
_POLISH_KEY = 'polishing' if _OSQP_V1 else 'polish'
_REFINE_KEY = 'polish_refine_iter'


class LpStatus(str, Enum):
    OPTIMAL = 'Optimal'
    INFEASIBLE = 'Infeasible'
    UNBOUNDED = 'Unbounded'


def _finite(m: Optional[Matrix]) -> bool:
    if m is None:
        return True
    if sparse.issparse(m):
        return bool(np.all(np.isfinite(m.data)))
    return bool(np.all(np.isfinite(m)))


def _check_pair(name: str, a: Optional[Matrix], b: Optional[np.ndarray], n: int) -> None:
    if a is None and b is None:
        return
    if a is None or b is None:
        raise DimensionMismatch('{}: matrix and vector must be given together'.format(name))
    if a.shape[1] != n or a.shape[0] != b.shape[0]:
        msg = '{}: matrix {} does not match vector {} for {} variables'
        raise DimensionMismatch(msg.format(name, a.shape, b.shape, n))


@dataclass(frozen=True)
class LinearProgram:
    """min c'z s.t. Gz <= h, Fz = g, bounds.

    Variables are free unless bounds say otherwise.
    """

    cost: np.ndarray
    G: Optional[Matrix] = None
    h: Optional[np.ndarray] = None
    F: Optional[Matrix] = None
    g: Optional[np.ndarray] = None
    bounds: Optional[Sequence[Bound]] = None

    def __post_init__(self):
        n = self.cost.shape[0]
        _check_pair('ineq', self.G, self.h, n)
        _check_pair('eq', self.F, self.g, n)
        if self.bounds is not None and len(self.bounds) != n:
            msg = 'bounds has {} entries for {} variables'
            raise DimensionMismatch(msg.format(len(self.bounds), n))
        for m in (self.cost, self.G, self.h, self.F, self.g):
            if not _finite(m):
                raise NumericalFailure('LinearProgram has non-finite entries')

    @property
    def n_variables(self) -> int:
        return int(self.cost.shape[0])

    @property
    def n_rows(self) -> int:
        rows = 0
        if self.G is not None:
            rows += self.G.shape[0]
        if self.F is not None:
            rows += self.F.shape[0]
        return rows


@dataclass
class LpSolution:
    status: LpStatus
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = float('inf')
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


@dataclass(frozen=True)
class ConstrainedLsProblem:
    """min ||Dz - f||^2 s.t. Gz >= h."""

    design: np.ndarray
    target: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        n = self.design.shape[1]
        if self.design.shape[0] != self.target.shape[0]:
            raise DimensionMismatch('design and target row counts differ')
        _check_pair('ineq', self.G, self.h, n)

    @property
    def degenerate(self) -> bool:
        return bool(np.linalg.matrix_rank(self.design) < self.design.shape[1])


def primal_residual(lp: LinearProgram, z: np.ndarray) -> float:
    """
    Largest violation of the LP constraints at z (0 when feasible)
    """
    worst = 0.0
    if lp.G is not None:
        worst = max(worst, float(np.max(lp.G @ z - lp.h, initial=0.0)))
    if lp.F is not None:
        worst = max(worst, float(np.max(np.abs(lp.F @ z - lp.g), initial=0.0)))
    if lp.bounds is not None:
        for zi, (lo, hi) in zip(z, lp.bounds):
            if lo is not None:
                worst = max(worst, lo - zi)
            if hi is not None:
                worst = max(worst, zi - hi)
    return worst


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solves a linear program with HiGHS

    input  - LinearProgram
    return - LpSolution; Infeasible/Unbounded are statuses, not errors
    """
    logger = logging.getLogger(__name__)
    bounds: List[Bound] = (
        list(lp.bounds) if lp.bounds is not None else [(None, None)] * lp.n_variables
    )
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        res = linprog(
            lp.cost,
            A_ub=lp.G,
            b_ub=lp.h,
            A_eq=lp.F,
            b_eq=lp.g,
            bounds=bounds,
            method='highs',
            options={
                'primal_feasibility_tolerance': FEAS_TOL * 0.1,
                'dual_feasibility_tolerance': KKT_TOL * 0.1,
            },
        )
    if res.status == 0:
        dual = np.zeros(0)
        if lp.G is not None and getattr(res, 'ineqlin', None) is not None:
            dual = -np.asarray(res.ineqlin.marginals, dtype=float)
        return LpSolution(LpStatus.OPTIMAL, np.asarray(res.x, dtype=float), float(res.fun), dual)
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, objective=float('-inf'))
    msg = 'LP solver stopped with status {}: {}'
    logger.debug(msg.format(res.status, res.message))
    raise NumericalFailure(msg.format(res.status, res.message))


def _refine_active_set(p: ConstrainedLsProblem, z: np.ndarray) -> np.ndarray:
    """
    Re-solves the equality-constrained least squares on the rows active at z
    """
    D, f, G, h = p.design, p.target, p.G, p.h
    n = D.shape[1]
    active = (G @ z - h) <= 1e-6 * (1.0 + np.abs(h))
    Ga = G[active]
    m = Ga.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = 2.0 * D.T @ D
    kkt[:n, n:] = Ga.T
    kkt[n:, :n] = Ga
    rhs = np.concatenate([2.0 * D.T @ f, h[active]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n]


def _cls_objective(p: ConstrainedLsProblem, z: np.ndarray) -> float:
    r = p.design @ z - p.target
    return float(r @ r)


def solve_cls(p: ConstrainedLsProblem) -> np.ndarray:
    """Inequality-constrained least squares as a convex QP

    input  - ConstrainedLsProblem (Gz >= h)
    return - minimizer z
    """
    logger = logging.getLogger(__name__)
    D, f, G, h = p.design, p.target, p.G, p.h
    if p.degenerate:
        logger.debug('Least-squares design is rank deficient; any optimum is returned.')
    P = sparse.triu(sparse.csc_matrix(2.0 * D.T @ D), format='csc')
    q = -2.0 * D.T @ f
    settings = {
        'verbose': False,
        'eps_abs': 1e-10,
        'eps_rel': 1e-10,
        'max_iter': 100000,
        _POLISH_KEY: True,
        _REFINE_KEY: 10,
    }
    solver = osqp.OSQP()
    solver.setup(
        P=P,
        q=q,
        A=sparse.csc_matrix(G),
        l=np.asarray(h, dtype=float),
        u=np.full(h.shape[0], np.inf),
        **settings
    )
    res = solver.solve()
    status = str(res.info.status).lower()
    if 'infeasible' in status and 'dual' not in status:
        raise Infeasible('No point satisfies the least-squares constraints.')
    if res.x is None or not np.all(np.isfinite(res.x)):
        raise NumericalFailure('QP solver returned no solution ({})'.format(status))
    z = np.asarray(res.x, dtype=float)

    refined = _refine_active_set(p, z)
    if np.all(G @ refined >= h - FEAS_TOL) and _cls_objective(
        p, refined
    ) <= _cls_objective(p, z) + KKT_TOL:
        z = refined
    violation = float(np.max(h - G @ z, initial=0.0))
    if violation > FEAS_TOL:
        msg = 'Least-squares solution violates constraints by {:.3e}'
        raise NumericalFailure(msg.format(violation))
    return z
