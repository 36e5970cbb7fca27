"""Exception types shared across the package."""


class IcctError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(IcctError, ValueError):
    """Invalid input data or configuration."""


class ConvergenceError(IcctError, RuntimeError):
    """An iterative solve did not reach its tolerance within the iteration cap."""


class InstabilityError(IcctError):
    """The requested crystal configuration is mechanically unstable."""


class DimensionCapError(IcctError):
    """The exact solver was asked for a Hilbert space beyond its size cap."""


class NoAdmissibleRootError(IcctError):
    """Ratio inversion found no real non-negative root."""


class AmbiguousRootError(IcctError):
    """Ratio inversion found two candidate roots close to the rough estimate."""


class DegenerateSidebandsError(IcctError):
    """Red and blue excitation probabilities too close to separate."""


class NoUsableRecordsError(IcctError):
    """No measurement record survived the admissibility filters."""


class UninformativeDataError(IcctError):
    """The data carry no information on the parameter (e.g. all-zero counts)."""


class BracketEdgeError(IcctError):
    """A bounded minimization ended on the bracket edge instead of an interior minimum."""
