#!/usr/bin/env python3
# -*- coding: utf-8 -*-
from __future__ import print_function
import os
import sys
import logging
import argparse
from typing import Dict, Any
from rich.traceback import install
from .parse_args import run_argparse
from .helper_functions import end_program, json_writer, siginthandler
from .configuration import read_config, validate_arguments, write_config
from .harness import CampaignConfig, check_configuration, evaluate_q_surface, run_mode
from ._exceptions import LmpcError
from signal import signal, SIGPIPE, SIGINT, SIG_DFL
from .__version__ import __version__

install()
signal(SIGPIPE, SIG_DFL)
signal(SIGINT, siginthandler)


def run(args: argparse.Namespace) -> None:
    logger = logging.getLogger(__name__)

    # CONFIGURATION SECTION ---------------------------------------------------
    logger.info('Reconciling configuration settings.')
    config: Dict[str, Any] = read_config(args.config)
    settings = validate_arguments(args, config)
    write_config(settings, args.configfile)
    campaign = CampaignConfig.from_settings(settings)

    # CAMPAIGN SECTION --------------------------------------------------------
    msg = 'Running {} with N={}, R={}, J={} into {}'
    logger.info(
        msg.format(
            campaign.study,
            campaign.horizon,
            campaign.rollouts_per_iteration,
            campaign.iterations,
            campaign.out,
        )
    )
    run_mode(campaign)


def check(args: argparse.Namespace) -> None:
    logger = logging.getLogger(__name__)
    config: Dict[str, Any] = read_config(args.config)
    settings = validate_arguments(args, config)
    summary = check_configuration(CampaignConfig.from_settings(settings))
    msg = 'Goal set has {} vertices; invariance margin {:.2e}; spectral radius {:.4f}'
    logger.info(
        msg.format(
            len(summary['goal_set']['vertices']),
            summary['invariance_margin'],
            summary['spectral_radius'],
        )
    )
    if not summary['assumption_holds']:
        logger.error('Goal set is not robustly invariant or Kx leaves U on it.')
        end_program(3)


def eval_q(args: argparse.Namespace) -> None:
    logger = logging.getLogger(__name__)
    df = evaluate_q_surface(args.terminal_data, args.grid, args.out)
    if args.out:
        logger.info('Q surface written to {}'.format(os.path.abspath(args.out)))
    else:
        df.to_csv(sys.stdout, index=False)


def main() -> None:
    # ARGPARSE SECTION --------------------------------------------------------
    args: argparse.Namespace = run_argparse()
    logger = logging.getLogger(__name__)
    logger.info('Welcome to lmpc version {}'.format(__version__))

    commands = {'run': run, 'check': check, 'eval-q': eval_q}
    try:
        commands[args.command](args)
    except LmpcError as exc:
        logger.error('{}: {}'.format(type(exc).__name__, exc))
        if args.rundir:
            json_writer(
                os.path.join(args.rundir, 'error.json'),
                {'error': type(exc).__name__, 'message': str(exc), 'exit_code': exc.exit_code},
            )
        end_program(exc.exit_code)
    end_program(0)


if __name__ == '__main__':
    main()
