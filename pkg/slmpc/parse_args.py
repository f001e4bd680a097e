#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import os
import argparse
import logging
import pprint
import sys
from typing import List, Optional
from rich.logging import RichHandler
from rich.console import Console
from .helper_functions import attach_trace_handler
from .__version__ import __version__


def config_outdir(out: str) -> str:
    """Creates (or reuses) the output directory

    input  - output directory as given as input
    output - full path to the output directory
    """
    outdir = os.path.abspath(out)
    if not os.path.exists(outdir):
        try:
            os.makedirs(outdir)
        except OSError as ose:
            msg = 'Unable to generate output directory "{}" : {}'
            sys.stderr.write(msg.format(outdir, ose) + '\n')
            sys.stderr.write('Check your path and try again.\n')
            exit(2)
    return outdir


def extant_file(x: str) -> str:
    """
    'Type' for argparse - checks that file exists
    input  - path to file
    return - absolute path to file
    """
    if not os.path.exists(x):
        raise argparse.ArgumentTypeError("{} does not exist".format(x))
    return os.path.abspath(x)


def init_logger(debug: bool, quiet: bool, rundir: str, runid: str) -> None:
    """Sets up logging system to file and stderr

    input  - parsed arguments
    return - None; use logger = logging.getLogger(__name__)
    """

    # must set logging level to DEBUG to print DEBUG to file
    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)

    stderr_handler = RichHandler(rich_tracebacks=True)
    if not sys.stderr.isatty():
        stderr_handler = RichHandler(rich_tracebacks=True, console=Console(width=119))
    if debug:
        stderr_handler.setLevel(logging.DEBUG)
    elif quiet:
        stderr_handler.setLevel(logging.WARNING)
    else:
        stderr_handler.setLevel(logging.INFO)
    logger.addHandler(stderr_handler)

    # Print to file as well, if provided.
    if rundir and runid:
        logfile = os.path.join(rundir, '{}.log'.format(runid))
        file_handler = RichHandler(console=Console(file=open(logfile, 'a'), width=119))
        logger.addHandler(file_handler)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--debug',
        help='Turn on debugging messages.',
        action='store_true',
        default=False,
    )
    parser.add_argument(
        '--quiet',
        help='Turn off progress messages.',
        action='store_true',
        default=False,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='lmpc',
        description='Sample-based learning model predictive control for '
        'uncertain linear systems: learns a convex safe set and a terminal '
        'cost from closed-loop roll-outs.',
        epilog='Quick usage: lmpc run --config configs/double_integrator.json '
        '--mode explore --out runs/explore',
    )
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    run = sub.add_parser('run', help='Run a learning campaign or study.')
    run.add_argument('--config', help='Path to configuration json file.', type=extant_file)
    run.add_argument(
        '--mode',
        help='Campaign to run. [explore]',
        choices=['explore', 'cost-study', 'epsilon-gamma'],
        type=str,
    )
    run.add_argument('--seed', dest='master_seed', help='Master random seed. [0]', type=int)
    run.add_argument('--out', help='Output directory. [out]', type=str)
    run.add_argument('-N', '--horizon', help='Prediction horizon. [3]', type=int)
    run.add_argument(
        '-R', '--rollouts', dest='rollouts_per_iteration',
        help='Roll-outs per iteration. [1000]', type=int,
    )
    run.add_argument('-J', '--iterations', help='Learning iterations. [10]', type=int)
    run.add_argument('-t', '--threads', help='Number of processes to use. [1]', type=int)
    run.add_argument(
        '--trace',
        help='Write solver events as JSON lines to <out>/trace.jsonl.',
        action='store_true',
        default=False,
    )
    _common(run)

    evalq = sub.add_parser('eval-q', help='Sample Q on a grid from terminal data.')
    evalq.add_argument(
        '--terminal-data', dest='terminal_data', required=True,
        help='Path to terminal_data.json.', type=extant_file,
    )
    evalq.add_argument(
        '--grid', required=True, help='Grid as xmin:xmax:nx,ymin:ymax:ny.', type=str
    )
    evalq.add_argument('--out', help='CSV file to write. [stdout]', type=str)
    _common(evalq)

    check = sub.add_parser('check', help='Check the goal-set assumptions for a config.')
    check.add_argument('--config', help='Path to configuration json file.', type=extant_file)
    _common(check)
    return parser


def run_argparse(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.rundir = ''
    args.runid = ''
    if args.command == 'run':
        args.rundir = config_outdir(args.out or 'out')
        args.out = args.rundir
        args.runid = 'lmpc'
        args.configfile = os.path.join(args.rundir, 'config.json')
    init_logger(args.debug, args.quiet, args.rundir, args.runid)
    if getattr(args, 'trace', False):
        args.trace = os.path.join(args.rundir, 'trace.jsonl')
        attach_trace_handler(args.trace)
    else:
        args.trace = None
    logger = logging.getLogger(__name__)
    logger.debug('Started lmpc {}'.format(args.command))
    logger.debug(pprint.pformat(vars(args)))
    return args
