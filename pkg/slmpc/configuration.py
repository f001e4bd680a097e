#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import logging
import os
import json
import argparse
import pprint
import psutil  # type: ignore
import numpy as np  # type: ignore
from typing import List, Dict, Any, Optional
from ._exceptions import ConfigurationError
from .geometry import Box, as_hrep, from_dict
from .helper_functions import end_program, json_writer
from .plant import LtiSystem
from ._settings import COST_STUDY_WEIGHTS, DEFAULTS, DOUBLE_INTEGRATOR

MODES = ('explore', 'cost_study', 'epsilon_gamma', 'epsilon_study', 'gamma_study')


def read_config(configfile: Optional[str]) -> Dict[str, Any]:
    """Finds settings in config file (json format).

    input  - path to config file, or None
    return - dict with configuration settings
    """
    logger = logging.getLogger(__name__)
    if not configfile:
        logger.debug('No configuration file given; using defaults.')
        return {}
    logger.info('Reading from configuration file: {}'.format(configfile))
    try:
        with open(configfile, 'r') as cf:
            config: Dict[str, Any] = json.load(cf)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError('Unable to read {}: {}'.format(configfile, exc))
    return config


def system_from_config(config: Dict[str, Any]) -> LtiSystem:
    """Builds the plant from the "system" section

    input  - config dict; the double integrator is used when absent
    return - LtiSystem
    """
    spec = config.get('system') or DOUBLE_INTEGRATOR
    try:
        W = from_dict(spec['W'])
        if not isinstance(W, Box):
            raise ConfigurationError('The disturbance set W must be a box.')
        return LtiSystem(
            np.array(spec['A'], dtype=float),
            np.array(spec['B'], dtype=float),
            W,
            as_hrep(from_dict(spec['X'])),
            as_hrep(from_dict(spec['U'])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError('Malformed system definition: {}'.format(exc))


def parse_grid(spec: Any) -> Optional[List[np.ndarray]]:
    """Grid axes from "xmin:xmax:nx,ymin:ymax:ny" or [[xmin, xmax, nx], ...]

    input  - grid description or None
    return - list of axis sample vectors
    """
    if spec is None:
        return None
    if isinstance(spec, str):
        spec = [part.split(':') for part in spec.split(',')]
    axes = []
    try:
        for lo, hi, count in spec:
            axes.append(np.linspace(float(lo), float(hi), int(count)))
    except (TypeError, ValueError):
        raise ConfigurationError('Grid "{}" is not of the form xmin:xmax:nx,ymin:ymax:ny'.format(spec))
    if len(axes) != 2 or any(len(a) < 1 for a in axes):
        raise ConfigurationError('Grid needs two axes with at least one point each.')
    return axes


def validate_arguments(args: argparse.Namespace, config: Dict[str, Any]) -> Dict[str, Any]:
    """Reconciles command line, config file and defaults.

    input  - args from argparse; config from config file
    return - resolved settings; command line wins over the file
    """
    logger = logging.getLogger(__name__)
    logger.debug('Validating & reconciling arguments.')

    resolved: Dict[str, Any] = {}
    for key, default in DEFAULTS.items():
        value = getattr(args, key, None)
        if value is None:
            if key in config.keys() and config[key] is not None:
                value = config[key]
            else:
                value = default
        elif key in config.keys() and config[key] is not None and config[key] != value:
            msg = 'Command line {}={} overrides config value {}'
            logger.debug(msg.format(key, value, config[key]))
        resolved[key] = value
    resolved['system'] = config.get('system') or DOUBLE_INTEGRATOR
    resolved['mode'] = str(resolved['mode']).replace('-', '_')
    resolved['out'] = os.path.abspath(args.out if getattr(args, 'out', None) else config.get('out', 'out'))
    resolved['trace'] = getattr(args, 'trace', None)

    if resolved['mode'] not in MODES:
        msg = 'Mode "{}" is not valid.'
        logger.error(msg.format(resolved['mode']))
        msg = 'Please give one of {} and try again.'
        logger.error(msg.format(', '.join(MODES)))
        end_program(2)

    if resolved['mode'] == 'cost_study' and getattr(args, 'weights', None) is None \
            and config.get('weights') is None:
        msg = 'No stage-cost weights given; the cost study uses {}.'
        logger.info(msg.format(COST_STUDY_WEIGHTS))
        resolved['weights'] = list(COST_STUDY_WEIGHTS)

    maxthreads = psutil.cpu_count() or 1
    logger.debug('Max threads found {}'.format(maxthreads))
    if int(resolved['threads']) > maxthreads:
        msg = 'Threads specified {} greater than number of available threads {}'
        logger.error(msg.format(resolved['threads'], maxthreads))
        msg = 'Specify threads less than or equal to {} and try again.'
        logger.error(msg.format(maxthreads))
        end_program(2)

    logger.debug('Validated arguments:')
    logger.debug('\n' + pprint.pformat(resolved, indent=4))
    return resolved


def write_config(resolved: Dict[str, Any], configfile: str) -> None:
    """Writes the resolved configuration, overwriting old if necessary

    input  - resolved settings, path to config.json
    return - NULL
    """
    logger = logging.getLogger(__name__)
    logger.debug('Writing config file {}'.format(configfile))
    configdict = dict(resolved)
    configdict.pop('trace', None)
    json_writer(configfile, configdict)
