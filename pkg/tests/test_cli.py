#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import argparse
import os

import numpy as np  # type: ignore
import pytest

from slmpc._exceptions import ConfigurationError
from slmpc._settings import DEFAULTS, DOUBLE_INTEGRATOR
from slmpc.configuration import (
    parse_grid,
    read_config,
    system_from_config,
    validate_arguments,
    write_config,
)
from slmpc.harness import CampaignConfig
from slmpc.helper_functions import json_reader
from slmpc.parse_args import build_parser, extant_file

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'configs')


def test_run_arguments():
    args = build_parser().parse_args(['run', '--mode', 'cost-study', '-N', '4', '--seed', '3'])
    assert args.command == 'run'
    assert (args.mode, args.horizon, args.master_seed) == ('cost-study', 4, 3)
    assert args.rollouts_per_iteration is None
    assert not args.trace


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(['run', '--mode', 'sweep'])


def test_eval_q_arguments(tmp_path):
    fn = tmp_path / 'terminal_data.json'
    fn.write_text('[]')
    args = build_parser().parse_args(
        ['eval-q', '--terminal-data', str(fn), '--grid=-1:1:3,-1:1:3']
    )
    assert args.terminal_data == os.path.abspath(str(fn))
    assert args.grid == '-1:1:3,-1:1:3'


def test_extant_file(tmp_path):
    with pytest.raises(argparse.ArgumentTypeError):
        extant_file(str(tmp_path / 'missing.json'))


def test_command_line_beats_config_beats_defaults(tmp_path):
    args = build_parser().parse_args(['run', '--mode', 'cost-study', '-N', '4'])
    args.out = str(tmp_path)
    settings = validate_arguments(args, {'horizon': 5, 'iterations': 2})
    assert settings['horizon'] == 4
    assert settings['iterations'] == 2
    assert settings['rollouts_per_iteration'] == DEFAULTS['rollouts_per_iteration']
    assert settings['mode'] == 'cost_study'
    assert settings['system'] == DOUBLE_INTEGRATOR
    assert settings['out'] == os.path.abspath(str(tmp_path))


def test_cost_study_weights_default(tmp_path):
    args = build_parser().parse_args(['run', '--mode', 'cost-study'])
    args.out = str(tmp_path)
    settings = validate_arguments(args, {})
    assert settings['weights'] == [0.1, 1.0]
    assert CampaignConfig.from_settings(settings).weights == [0.1, 1.0]
    given = validate_arguments(args, {'weights': [2.0, 3.0]})
    assert given['weights'] == [2.0, 3.0]
    explore = validate_arguments(argparse.Namespace(out=str(tmp_path)), {})
    assert explore['weights'] == DEFAULTS['weights']


def test_unknown_mode_exits_with_configuration_code():
    with pytest.raises(SystemExit) as exc:
        validate_arguments(argparse.Namespace(mode='sweep'), {})
    assert exc.value.code == 2


def test_read_config(tmp_path):
    assert read_config(None) == {}
    with pytest.raises(ConfigurationError):
        read_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"horizon": ')
    with pytest.raises(ConfigurationError):
        read_config(str(bad))


def test_shipped_config_round_trip(tmp_path):
    config = read_config(os.path.join(CONFIGS, 'double_integrator.json'))
    settings = validate_arguments(argparse.Namespace(out=str(tmp_path)), config)
    campaign = CampaignConfig.from_settings(settings)
    assert (campaign.horizon, campaign.rollouts_per_iteration, campaign.iterations) == (3, 1000, 10)
    assert campaign.study == 'explore'
    assert [len(a) for a in campaign.q_grid] == [41, 41]
    np.testing.assert_allclose(campaign.system.A, [[1.0, 1.0], [0.0, 1.0]])
    fn = str(tmp_path / 'config.json')
    write_config(dict(settings, trace='trace.jsonl'), fn)
    written = json_reader(fn)
    assert 'trace' not in written
    assert written['horizon'] == 3


@pytest.mark.parametrize('name', ['smoke.json', 'cost_study.json', 'epsilon_gamma.json'])
def test_shipped_configs_validate(name, tmp_path):
    config = read_config(os.path.join(CONFIGS, name))
    campaign = CampaignConfig.from_settings(validate_arguments(argparse.Namespace(out=str(tmp_path)), config))
    assert campaign.study in ('explore', 'cost_study', 'epsilon_gamma')


def test_parse_grid():
    axes = parse_grid('-2:1:4,-1:1:3')
    np.testing.assert_allclose(axes[0], [-2.0, -1.0, 0.0, 1.0])
    np.testing.assert_allclose(axes[1], [-1.0, 0.0, 1.0])
    assert [len(a) for a in parse_grid([[0, 1, 5], [0, 1, 2]])] == [5, 2]
    assert parse_grid(None) is None
    with pytest.raises(ConfigurationError):
        parse_grid('0:1,0:1:2')
    with pytest.raises(ConfigurationError):
        parse_grid('0:1:2,0:1:2,0:1:2')


def test_system_definition_errors():
    spec = dict(DOUBLE_INTEGRATOR)
    spec['W'] = {'type': 'hrep', 'F': [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                 'g': [0.1, 0.1, 0.1, 0.1]}
    with pytest.raises(ConfigurationError):
        system_from_config({'system': spec})
    broken = {k: v for k, v in DOUBLE_INTEGRATOR.items() if k != 'A'}
    with pytest.raises(ConfigurationError):
        system_from_config({'system': broken})
