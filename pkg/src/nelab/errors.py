"""Exception hierarchy.

Every domain failure derives from :class:`DomainError`; the CLI maps those to
exit status 1 and prints the class name.
"""


class DomainError(Exception):
    """Base class for recoverable domain failures."""


class DegenerateMap(DomainError):
    pass


class NonDifferentiable(DomainError):
    pass


class BadTriangle(DomainError):
    pass


class BadMesh(DomainError):
    pass


class BadParams(DomainError):
    pass


class BoundaryVertex(DomainError):
    pass


class ConnectivityMismatch(DomainError):
    pass


class EmptySequence(DomainError):
    pass


class NotAStrip(DomainError):
    pass


class NotClosed(DomainError):
    pass


class ClosedSurface(DomainError):
    pass


class LineSearchFailed(DomainError):
    pass


class FormatError(DomainError):
    """Malformed ``bodymesh``/``bodyconf``/CSV input."""


class ConfigError(Exception):
    """Invalid experiment configuration (a usage error, not a domain error)."""
