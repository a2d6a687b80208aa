"""Exception hierarchy.

``DataError`` subclasses map to CLI exit code 2, ``SolverError`` subclasses
to exit code 3.
"""


class StreamlamError(Exception):
    """Base class for all library errors.

    ``stage`` names the pipeline stage the error was raised in, when known.
    """

    stage = None

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class DataError(StreamlamError):
    pass


class SolverError(StreamlamError):
    pass


class OutOfBounds(DataError):
    pass


class MalformedHeader(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonOrthogonalFrame(DataError):
    pass


class GridMismatch(DataError):
    pass


class InvalidParam(DataError):
    pass


class InvalidRange(DataError):
    pass


class DegenerateProjection(DataError):
    pass


class SeedRejected(DataError):
    def __init__(self, reason):
        super().__init__(f"seed rejected: {reason}")
        self.reason = reason


class InsufficientDomain(DataError):
    pass


class EmptySurface(DataError):
    pass


class SeparationViolation(DataError):
    pass


class NoTripleIntersections(DataError):
    pass


class FacePairingConflict(DataError):
    pass


class DegenerateCell(DataError):
    pass


class UnknownGenerator(DataError):
    pass


class IoError(DataError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class SolverFailure(SolverError):
    pass


class TooManyFreeVariables(SolverError):
    pass
