"""Exception hierarchy. Input/geometry problems exit the CLI with 2, numerical failures with 3."""


class DbspinError(Exception):
    """Base class for all package errors."""


class InputError(DbspinError):
    """Invalid argument, file, or configuration."""


class ParseError(InputError):
    """Malformed structure or config document."""


class GeometryError(InputError):
    """Structure violates a geometric invariant (overlap, coordination, cell)."""


class UnsupportedSurfaceError(InputError):
    """Miller index outside the supported family."""


class InvalidSiteError(InputError):
    """Atom index not a valid target for the requested operation."""


class IncompleteTerminationError(InputError):
    """Termination rules leave an exposed site without a rule."""


class SingularityError(InputError):
    """Nucleus coincides with a spin-density site."""


class NumericalError(DbspinError):
    """Solver or integrator failed to converge."""
