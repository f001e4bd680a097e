#!/usr/bin/env python3
# -*- coding: utf-8 -*-
from __future__ import print_function
import os
import json
import logging
import math
import signal
import psutil  # type: ignore
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple
from hashlib import blake2b

TRACE_LOGGER = 'slmpc.trace'


def siginthandler(sig, frame):
    print('\033[?25h')
    end_program(130)


def attach_trace_handler(trace_path: str) -> None:
    """Routes JSON trace events to a JSON-lines file

    input  - path to trace.jsonl (appended to)
    return - None
    """
    trace = logging.getLogger(TRACE_LOGGER)
    for handler in trace.handlers:
        if getattr(handler, 'baseFilename', None) == os.path.abspath(trace_path):
            return
    handler = logging.FileHandler(trace_path, mode='a')
    handler.setFormatter(logging.Formatter('%(message)s'))
    trace.addHandler(handler)
    trace.setLevel(logging.INFO)
    trace.propagate = False


def emit_trace(event: Dict[str, Any]) -> None:
    """
    Writes one trace event when --trace is active
    """
    trace = logging.getLogger(TRACE_LOGGER)
    if trace.handlers:
        trace.info(json.dumps(event, sort_keys=True))


def worker_init(parent_id: int, trace_path: Optional[str] = None) -> None:
    logger = logging.getLogger(__name__)
    if trace_path:
        attach_trace_handler(trace_path)

    def sig_int(signal_num, frame):
        parent = psutil.Process(parent_id)
        pid = os.getpid()
        for child in parent.children():
            if child.pid != pid:
                if child.is_running():
                    logger.debug(f'killing child: {child.pid}')
                    child.kill()
        logger.debug(f'killing parent: {parent_id}')
        if parent.is_running():
            parent.kill()
        end_program(130)

    signal.signal(signal.SIGINT, sig_int)


def end_program(code: int) -> None:
    """
    Program message including success or failure of the program.
    """
    logger = logging.getLogger(__name__)
    if code == 0:
        msg = 'Program was a success! Congratulations!'
        logger.info(msg)
    elif code == 130:
        print('\033[?25h')
        msg = 'Program was interrupted using the keyboard.'
        logger.info(msg)
        msg = 'Partial iteration directories may exist. Re-running the campaign is suggested.'
        logger.info(msg)
    else:
        msg = 'Program exiting with code ({}) indicating failure.'
        logger.info(msg.format(code))
        if code == 2:
            msg = 'Check the configuration file and command-line values.'
        elif code == 3:
            msg = 'The goal set or gain does not satisfy the invariance assumptions.'
        else:
            msg = 'Check error messages to resolve the problem.'
        logger.info(msg)
    exit(code)


def json_writer(fn, x):
    """
    Writes object to file as json format.
    """
    with open(fn, 'w') as fh:
        json.dump(x, fh, indent=4)
        fh.write('\n')


def json_reader(fn) -> Any:
    with open(fn, 'r') as fh:
        return json.load(fh)


def jsonl_writer(fn: str, rows: Iterable[Dict[str, Any]]) -> None:
    """
    Writes one compact json object per line.
    """
    with open(fn, 'w') as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write('\n')


def jsonl_reader(fn: str) -> Iterator[Dict[str, Any]]:
    with open(fn, 'r') as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def generate_hash(s: str) -> str:
    """
    Generates blake2b hash for a string
    input  - string
    return - blake2b hash digest
    """
    seqhash = blake2b(s.encode(), digest_size=16)
    return seqhash.hexdigest()


def derive_seed(master_seed: int, *labels: Any) -> int:
    """Seed for one random stream, stable across runs and processes

    input  - master seed and stream labels, e.g. ('rollout', j, i)
    return - 63-bit integer seed
    """
    key = ':'.join(str(item) for item in (master_seed,) + labels)
    return int(generate_hash(key)[:16], 16) >> 1


def wilson_interval(count: int, trials: int, z: float = 1.96) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion

    input  - successes, trials, normal quantile
    return - (low, high); (0, 1) when there are no trials
    """
    if trials <= 0:
        return 0.0, 1.0
    p = count / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def state_columns(n: int) -> List[str]:
    """
    CSV column names for n-dimensional states
    """
    if n == 2:
        return ['x', 'y']
    return ['x{}'.format(i + 1) for i in range(n)]
