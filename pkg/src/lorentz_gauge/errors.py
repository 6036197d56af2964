"""Exception types shared across the library."""


class DomainError(ValueError):
    """A point, parameter or index is outside the valid domain."""


class CapabilityError(NotImplementedError):
    """The requested query is not supported for this metric kind."""


class AdmissibilityError(ValueError):
    """A broken-ray query violates one of its admissibility conditions.

    The message names the violated condition.
    """


class GeometryError(RuntimeError):
    """A geometric construction failed (no common parameter, degenerate angle, ...)."""


class IntegrityError(RuntimeError):
    """An internal consistency check failed (e.g. a gauge sample is not unitary)."""
