"""Exception types shared across the package."""


class AerisError(Exception):
    """Base class for all package-specific errors."""


class GenerationFailed(AerisError):
    """Scenario generation could not satisfy placement constraints."""


class DegenerateLink(AerisError):
    """Transmitter and receiver occupy the same point."""


class EmptySampleSet(AerisError):
    """A radio map cannot be built from zero samples."""


class UnknownNode(AerisError):
    """A node id is not present in the channel graph."""


class NoFeasiblePath(AerisError):
    """No delivery schedule meets the deadline under the power limit."""


class EscalateToStrategic(AerisError):
    """Local repair is impossible; a global replan is required."""


class InfeasibleSchedule(AerisError):
    """Hop precedence cannot be satisfied within the reserved windows."""


class ExceedsPMax(AerisError):
    """The outage target requires more transmit power than allowed."""


class OutOfRange(AerisError):
    """Requested forecast time exceeds the view's horizon."""


class OutOfRegion(AerisError):
    """A local-tier view was asked about a link outside its region."""


class ConfigInvalid(AerisError):
    """A scenario configuration field failed validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
