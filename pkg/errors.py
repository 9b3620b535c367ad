"""
Exception hierarchy for the delay-diffusion lab.

Every failure an operation can raise derives from SimulationError so the
CLI can map it onto its exit-code contract. Bound violations and other
empirical findings are never raised; they are recorded on reports.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for all errors raised by the lab."""


class ConfigurationError(SimulationError, ValueError):
    """A domain, scenario or override is structurally invalid."""


class ScenarioParseError(ConfigurationError):
    """A scenario file could not be read or parsed."""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)


class ShapeError(SimulationError, ValueError):
    """Array sizes do not match the basis or quadrature grid."""


class AssumptionError(SimulationError):
    """A structural assumption of the model is violated."""

    def __init__(self, clause: str, detail: str):
        self.clause = clause
        self.detail = detail
        super().__init__(f"assumption {clause} violated: {detail}")


class DelayTooStrongError(AssumptionError):
    """No admissible beta gives a positive decay rate beta_1."""


class NumericError(SimulationError, ArithmeticError):
    """Non-finite values appeared in a computation."""


class StiffnessError(NumericError):
    """The diagonal mass 1 + eps(t) * lambda_j is not positive."""


class CoverageError(SimulationError, LookupError):
    """A history query falls outside the recorded window."""


class OrderingError(SimulationError, ValueError):
    """History knots were pushed out of time order."""


class InvalidBoundsError(SimulationError, ValueError):
    """Bounds parameters cannot be used (beta_1 <= 0)."""


class IntegrationError(SimulationError):
    """A time step failed; carries the time at which it failed."""

    def __init__(self, time: float, cause: Exception):
        self.time = time
        self.cause = cause
        super().__init__(f"integration failed at t={time:.6g}: {cause}")


class ConsistencyError(SimulationError):
    """A decomposition does not reproduce the full solution."""
