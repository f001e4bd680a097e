#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest

from slmpc.configuration import system_from_config
from slmpc.geometry import Box, VPolytope, box_to_hrep, box_vertices
from slmpc.plant import GoalSetData, StageCost, build_goal_set, dlqr_gain


def pytest_addoption(parser):
    parser.addoption(
        '--runslow', action='store_true', default=False, help='run benchmark reproductions'
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def sys():
    """Double integrator, |w| <= 0.1, |x| <= 10, |u| <= 1."""
    return system_from_config({})


@pytest.fixture(scope='session')
def gain(sys):
    K, _ = dlqr_gain(sys.A, sys.B, np.eye(2), np.eye(1))
    return K


@pytest.fixture(scope='session')
def goal(sys, gain):
    return build_goal_set(sys, gain)


@pytest.fixture(scope='session')
def cost(goal):
    return StageCost(1.0, 1.0, goal)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope='session')
def unit_goal():
    """O = unit box, KO = [-0.5, 0.5], K = 0; distances are easy by hand."""
    O = VPolytope(box_vertices(Box(np.zeros(2), np.ones(2))))
    return GoalSetData(np.zeros((1, 2)), O, VPolytope(np.array([[-0.5], [0.5]])), 0.0)


@pytest.fixture(scope='session')
def unit_box():
    return box_to_hrep(Box(np.zeros(2), np.ones(2)))
