"""Exception hierarchy shared across the pipeline stages."""


class LdcError(Exception):
    """Base class for all package errors."""


class MalformedEventError(LdcError, ValueError):
    """Event time series violates structural invariants (spacing, ordering, length)."""


class DegenerateGeometryError(LdcError, ValueError):
    """Lateral fit impossible: zero travel distance or vanishing basis."""


class VanishingBoxMassError(LdcError, ValueError):
    """A Gaussian places (numerically) no mass inside the bounding box.

    Widen the bounds or move the component mean back toward the data.
    """


class DataOutsideBoxError(LdcError, ValueError):
    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"data row {row} is not strictly inside the model box")


class DegenerateComponentError(LdcError, ArithmeticError):
    def __init__(self, component: int, mass: float):
        self.component = component
        self.mass = mass
        super().__init__(f"component {component} collapsed (responsibility mass {mass:.3g})")


class SamplingError(LdcError, RuntimeError):
    """Rejection sampler cannot make progress for a component."""


class SchemaError(LdcError, ValueError):
    """Input file has wrong columns, non-finite values or a schema mismatch."""
