#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Uncertain LTI plant, LQR gain, robust invariant goal set and stage cost."""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np  # type: ignore
from scipy import linalg  # type: ignore

from ._exceptions import (
    ConfigurationError,
    DimensionMismatch,
    DisturbanceOutOfSupport,
    NoConvergence,
    NotContracting,
)
from ._settings import (
    DARE_MAX_ITER,
    DARE_TOL,
    FEAS_TOL,
    HULL_MEMBERSHIP_TOL,
    MRPI_CONTRACTION,
    MRPI_MAX_HORIZON,
)
from .geometry import (
    Box,
    HPolytope,
    VPolytope,
    box_to_hrep,
    box_vertices,
    contains,
    linear_image,
    minkowski_sum,
    scale,
    set_distance_l1,
    support,
)

INVARIANCE_TOL = 1e-8


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    W: Box
    X: HPolytope
    U: HPolytope

    def __post_init__(self):
        object.__setattr__(self, 'A', np.atleast_2d(np.asarray(self.A, dtype=float)))
        object.__setattr__(self, 'B', np.atleast_2d(np.asarray(self.B, dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise DimensionMismatch('A is {} and B is {}'.format(self.A.shape, self.B.shape))
        if self.W.dim != n or self.X.dim != n or self.U.dim != self.B.shape[1]:
            raise DimensionMismatch('W, X, U dimensions do not match (A, B)')
        if np.any(self.X.g <= 0) or np.any(self.U.g <= 0):
            raise ConfigurationError('X and U must contain the origin in their interior')
        if not contains(self.W, np.zeros(n), 0.0):
            raise ConfigurationError('W must contain the origin')

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def d(self) -> int:
        return int(self.B.shape[1])


def step(sys: LtiSystem, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    x+ = Ax + Bu + w; the disturbance must lie in W
    """
    w = np.asarray(w, dtype=float)
    if not contains(sys.W, w, 1e-12):
        raise DisturbanceOutOfSupport('Disturbance {} outside W'.format(w.tolist()))
    return sys.A @ np.asarray(x, dtype=float) + sys.B @ np.atleast_1d(u) + w


def sample_disturbance(sys: LtiSystem, rng: np.random.Generator) -> np.ndarray:
    """
    Uniform sample on the box W, independent components
    """
    return rng.uniform(sys.W.center - sys.W.radius, sys.W.center + sys.W.radius)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def dare_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray) -> float:
    S = R + B.T @ P @ B
    res = A.T @ P @ A - P - A.T @ P @ B @ linalg.solve(S, B.T @ P @ A) + Q
    return float(np.max(np.abs(res)))


def dlqr_gain(
    A: np.ndarray,
    B: np.ndarray,
    Qw: np.ndarray,
    Rw: np.ndarray,
    tol: float = DARE_TOL,
    max_iter: int = DARE_MAX_ITER,
) -> Tuple[np.ndarray, np.ndarray]:
    """Discrete LQR gain by Riccati fixed-point iteration

    input  - A, B, state weight Qw, input weight Rw
    return - (K, P) with closed loop x+ = (A + BK)x
    """
    logger = logging.getLogger(__name__)
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    Q = np.atleast_2d(np.asarray(Qw, dtype=float))
    R = np.atleast_2d(np.asarray(Rw, dtype=float))
    P = Q.copy()
    for it in range(max_iter):
        S = R + B.T @ P @ B
        K = -linalg.solve(S, B.T @ P @ A)
        P_next = Q + A.T @ P @ A + A.T @ P @ B @ K
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) <= tol:
            P = P_next
            break
        P = P_next
    else:
        raise NoConvergence('Riccati iteration did not converge in {} steps'.format(max_iter))
    K = -linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    residual = dare_residual(A, B, Q, R, P)
    logger.debug('DARE converged after {} iterations, residual {:.2e}'.format(it + 1, residual))
    if residual > 1e-9:
        raise NoConvergence('DARE residual {:.2e} above 1e-9'.format(residual))
    return K, P


def mrpi_approx(
    Acl: np.ndarray, W: Box, contraction_tol: float = MRPI_CONTRACTION
) -> VPolytope:
    """Outer approximation of the minimal robust positive invariant set

    input  - closed-loop matrix, disturbance box, contraction target alpha
    return - O = (1/(1-alpha)) * sum_{i<s} Acl^i W
    """
    logger = logging.getLogger(__name__)
    if spectral_radius(Acl) >= 1.0:
        raise NotContracting('Closed loop is not stable; no invariant set exists')
    Wh = box_to_hrep(W)
    alpha = 0.0
    power = np.eye(Acl.shape[0])
    for s in range(1, MRPI_MAX_HORIZON + 1):
        power = Acl @ power
        alpha = 0.0
        contained = True
        for f, g in zip(Wh.F, Wh.g):
            value = support(W, power.T @ f)
            if g <= FEAS_TOL:
                if value > FEAS_TOL:
                    contained = False
                continue
            alpha = max(alpha, value / g)
        if contained and alpha <= contraction_tol:
            break
    else:
        msg = 'No horizon up to {} reaches contraction {}'
        raise NotContracting(msg.format(MRPI_MAX_HORIZON, contraction_tol))
    Wv = VPolytope(box_vertices(W))
    total = VPolytope(np.zeros((1, Acl.shape[0])))
    power = np.eye(Acl.shape[0])
    for _ in range(s):
        total = minkowski_sum(total, linear_image(Wv, power))
        power = Acl @ power
    msg = 'mRPI approximation: s={}, alpha={:.4g}, {} vertices'
    logger.debug(msg.format(s, alpha, len(total)))
    return scale(total, 1.0 / (1.0 - alpha))


def invariance_violation(Acl: np.ndarray, O: VPolytope, W: Box) -> float:
    """
    Largest 1-norm distance from (A+BK)v + w to O over vertex pairs
    """
    worst = 0.0
    for v in O.vertices:
        for w in box_vertices(W):
            worst = max(worst, set_distance_l1(Acl @ v + w, O))
    return worst


@dataclass(frozen=True)
class GoalSetData:
    K: np.ndarray
    O: VPolytope
    KO: VPolytope
    invariance_margin: float


def build_goal_set(sys: LtiSystem, K: np.ndarray, contraction_tol: float = MRPI_CONTRACTION) -> GoalSetData:
    """Goal set O, its input image KO and the vertex invariance margin

    input  - system, gain K
    return - GoalSetData
    """
    logger = logging.getLogger(__name__)
    K = np.atleast_2d(K)
    Acl = sys.A + sys.B @ K
    O = mrpi_approx(Acl, sys.W, contraction_tol)
    KO = linear_image(O, K)
    margin = invariance_violation(Acl, O, sys.W)
    msg = 'Goal set O has {} vertices; invariance margin {:.2e}'
    logger.info(msg.format(len(O), margin))
    return GoalSetData(K, O, KO, margin)


def check_assumption1(goal: GoalSetData, U: HPolytope) -> bool:
    """
    Robust invariance of O under u = Kx and admissibility of Kx on O
    """
    logger = logging.getLogger(__name__)
    if goal.invariance_margin > INVARIANCE_TOL:
        msg = 'Goal set invariance violated by {:.2e}'
        logger.warning(msg.format(goal.invariance_margin))
        return False
    for v in goal.O.vertices:
        if not contains(U, goal.K @ v, HULL_MEMBERSHIP_TOL):
            msg = 'Input Kx={} at goal-set vertex {} is outside U'
            logger.warning(msg.format((goal.K @ v).tolist(), v.tolist()))
            return False
    return True


@dataclass(frozen=True)
class LinearFeedback:
    """u = Kx, the auxiliary controller on O."""

    K: np.ndarray

    def __call__(self, x: np.ndarray, t: int = 0) -> np.ndarray:
        return np.atleast_2d(self.K) @ np.asarray(x, dtype=float)


@dataclass(frozen=True)
class StageCost:
    state_weight: float
    input_weight: float
    goal: GoalSetData

    def __post_init__(self):
        if self.state_weight <= 0 or self.input_weight <= 0:
            raise ConfigurationError('Stage-cost weights must be positive')


def stage_cost(c: StageCost, x: np.ndarray, u: np.ndarray) -> float:
    """
    h(x, u) = q_x |x|_O + q_u |u|_KO
    """
    dx = set_distance_l1(x, c.goal.O)
    du = set_distance_l1(np.atleast_1d(u), c.goal.KO)
    return c.state_weight * dx + c.input_weight * du
