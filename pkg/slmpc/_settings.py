#!/usr/bin/env python
# -*- coding: utf-8 -*-
FEAS_TOL = 1e-8
KKT_TOL = 1e-7
DEDUP_TOL = 1e-9
COLLINEAR_TOL = 1e-12
HULL_MEMBERSHIP_TOL = 1e-9
GOAL_TOL = 1e-7
GAMMA_TOL = 1e-6

MAX_BOX_DIM = 16
MAX_TREE_LEAVES = 10 ** 6
MRPI_MAX_HORIZON = 200
MRPI_CONTRACTION = 0.01
DARE_TOL = 1e-12
DARE_MAX_ITER = 100000

T_MAX = 100
PROBE_TOL = 1e-3
PROBE_MAX_ITER = 40

# Defaults for the double-integrator benchmark.
DEFAULTS = {
    'horizon': 3,
    'rollouts_per_iteration': 1000,
    'small_rollouts': 100,
    'evaluation_rollouts': 1000,
    'iterations': 10,
    'direction': [-1.0, 0.0],
    'ortho': [0.0, 1.0],
    'weights': [1.0, 1.0],
    'lqr_weights': [1.0, 1.0],
    'master_seed': 0,
    't_max': T_MAX,
    'mode': 'explore',
    'x0': None,
    'threads': 1,
    'q_grid': None,
    'probe_tol': PROBE_TOL,
    'bootstrap_horizon': 20,
}

# Stage-cost weights of the cost study when none are given.
COST_STUDY_WEIGHTS = [0.1, 1.0]

DOUBLE_INTEGRATOR = {
    'A': [[1.0, 1.0], [0.0, 1.0]],
    'B': [[0.0], [1.0]],
    'W': {'type': 'box', 'center': [0.0, 0.0], 'radius': [0.1, 0.1]},
    'X': {'type': 'box', 'center': [0.0, 0.0], 'radius': [10.0, 10.0]},
    'U': {'type': 'box', 'center': [0.0], 'radius': [1.0]},
}
