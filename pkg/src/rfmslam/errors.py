"""Exception hierarchy shared by the solver, simulator and file formats."""


class RfmSlamError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RfmSlamError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateRotationError(RfmSlamError):
    """A rotation parameter vector is too short to define a direction."""


class UnconstrainedRotationError(RfmSlamError):
    """A relative rotation has no (or ill-conditioned) constraints."""


class DisconnectedGraphError(RfmSlamError):
    """The orientation graph does not reach every node from the anchor."""

    def __init__(self, message, unreachable=()):
        super().__init__(message)
        self.unreachable = tuple(unreachable)


class RankDeficiencyError(RfmSlamError):
    """The global position system leaves some variables unconstrained."""

    def __init__(self, message, poses=(), landmarks=()):
        super().__init__(message)
        self.poses = tuple(poses)
        self.landmarks = tuple(landmarks)


class ConvergenceError(RfmSlamError):
    """An iterative solver failed in a way that leaves no usable result."""


class DatasetParseError(RfmSlamError):
    """Malformed dataset or estimate text."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DatasetValidationError(RfmSlamError):
    """Dataset is well formed but internally inconsistent."""
