"""Shared exception types."""


class CatchLabError(Exception):
    """Base class for all package errors."""


class ShapeError(CatchLabError):
    """Array dimensions do not chain."""


class ContractError(CatchLabError):
    """An operation was called outside its contract."""


class ConfigError(CatchLabError):
    """Invalid or degenerate configuration."""


class SimFault(CatchLabError):
    """Simulation produced a non-finite state."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class NonFiniteGradientError(CatchLabError):
    """Optimizer rejected an update because gradients contain NaN/Inf."""

    def __init__(self, names):
        super().__init__(f"non-finite gradient in: {', '.join(names)}")
        self.names = list(names)


class CalibrationError(CatchLabError):
    """Teleop retargeting channel has no calibration."""


class CheckpointError(CatchLabError):
    """Checkpoint container is malformed or incompatible."""


class DatasetError(CatchLabError):
    """Dataset file is corrupt, inconsistent, or incompatible."""
