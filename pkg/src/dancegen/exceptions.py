"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class DanceGenError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidInputError(DanceGenError, ValueError):
    """Malformed or out-of-contract input data."""

    exit_code = 2


class ShapeError(InvalidInputError):
    """Array shapes disagree with the layer or model configuration."""


class OutOfRangeError(InvalidInputError, IndexError):
    """A requested window falls outside the available data."""


class StateError(DanceGenError, RuntimeError):
    """An object is used in the wrong state (missing cache, incompatible checkpoint)."""

    exit_code = 3


class CheckpointError(StateError):
    """Checkpoint file is corrupt, of an unknown version, or incompatible."""


class NumericError(DanceGenError, FloatingPointError):
    """NaN/Inf encountered in gradients or losses."""

    exit_code = 4
