"""Error hierarchy shared by every app.

Library code raises these; management commands translate them into exit
codes (see `runs.command.EXIT_CODES`).
"""


class MotionFlowError(Exception):
    """Base class for all domain errors."""


class InvalidArgument(MotionFlowError, ValueError):
    """An argument is outside the operation's domain."""


class InvalidSchedule(MotionFlowError, ValueError):
    """Scales or time points violate ordering or bounds."""


class DegenerateTransition(MotionFlowError):
    """A cross-scale transition was asked to divide by t_k = 0."""


class IntegrationFailure(MotionFlowError):
    """The velocity callback returned a bad shape or non-finite values."""


class InvalidConfig(MotionFlowError, ValueError):
    """A run or model config failed validation."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class TokenizationError(MotionFlowError, KeyError):
    """A word is not in the closed vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class FormatError(MotionFlowError):
    """A file does not match its declared layout or container format."""


class DistanceUndefined(MotionFlowError):
    """A distance was requested on a set too small or degenerate to define it."""


class TrainingDiverged(MotionFlowError):
    """A training loss became non-finite."""

    def __init__(self, message, step=None, losses=None):
        super().__init__(message)
        self.step = step
        self.losses = losses or {}
