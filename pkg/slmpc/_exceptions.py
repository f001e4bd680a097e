#!/usr/bin/env python
# -*- coding: utf-8 -*-
from typing import Optional, Sequence


class LmpcError(Exception):
    exit_code = 4


class ConfigurationError(LmpcError):
    exit_code = 2


class AssumptionViolation(LmpcError):
    exit_code = 3


class NumericalFailure(LmpcError):
    exit_code = 5


class NoConvergence(NumericalFailure):
    pass


class NotContracting(NumericalFailure):
    pass


class Infeasible(LmpcError):
    pass


class Unbounded(LmpcError):
    pass


class DimensionTooLarge(ConfigurationError):
    pass


class DimensionMismatch(ConfigurationError):
    pass


class TreeTooLarge(ConfigurationError):
    pass


class DisturbanceOutOfSupport(LmpcError):
    pass


class EmptyInput(LmpcError):
    pass


class IncompleteRollout(LmpcError):
    pass


class OutsideDomain(LmpcError):
    """Raised by eval_Q when the point is outside the convex safe set."""

    def __init__(self, x: Sequence[float]):
        self.state = [float(v) for v in x]
        super().__init__('State {} is outside the value-function domain.'.format(self.state))


class PolicyInfeasible(LmpcError):
    def __init__(self, x: Sequence[float], time: Optional[int] = None):
        self.state = [float(v) for v in x]
        self.time = time
        msg = 'LMPC problem infeasible at state {}'.format(self.state)
        if time is not None:
            msg += ' (t={})'.format(time)
        super().__init__(msg)


class NoFeasiblePoint(LmpcError):
    pass


class RolloutDiverged(LmpcError):
    pass


class Bootstrap0Infeasible(LmpcError):
    pass
