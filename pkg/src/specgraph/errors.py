"""Exception hierarchy shared by all specgraph modules."""

from __future__ import annotations


class SpecGraphError(Exception):
    """Base class for library errors."""


class GraphError(SpecGraphError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class NonPositiveLength(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DimensionMismatch(SpecGraphError, ValueError):
    pass


class NonUnitary(SpecGraphError, ValueError):
    pass


class TooLarge(SpecGraphError, ValueError):
    pass


class NonRealZero(SpecGraphError):
    """A zero was located off the real axis inside the certification strip."""

    def __init__(self, message: str, locations=()):
        super().__init__(message)
        self.locations = list(locations)


class CloseZeros(SpecGraphError):
    def __init__(self, message: str, locations=()):
        super().__init__(message)
        self.locations = list(locations)


class TooFewZeros(SpecGraphError, ValueError):
    pass


class BootstrapViolation(SpecGraphError):
    pass


class Explosion(SpecGraphError):
    pass


class MissingLevelData(SpecGraphError, KeyError):
    pass


class FourierArtifact(SpecGraphError):
    pass


class GridMismatch(SpecGraphError, ValueError):
    pass
