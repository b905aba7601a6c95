"""Exception types raised by the library."""


class NLSAdiabaticError(Exception):
    """Base class for all library errors."""


class GaugeSingular(NLSAdiabaticError):
    """The gauge component is too small to fix the overall phase."""


class CoordinateSingular(NLSAdiabaticError):
    """Canonical coordinates evaluated on a pole of the chart (a population at 0 or 1)."""


class NonHermitian(NLSAdiabaticError):
    pass


class StepFailure(NLSAdiabaticError):
    """Adaptive step size underflow. ``t_reached`` holds the last good time."""

    def __init__(self, message, t_reached=None):
        super().__init__(message)
        self.t_reached = t_reached


class NotPeriodic(NLSAdiabaticError):
    pass


class NotClosed(NLSAdiabaticError):
    pass


class NotStationary(NLSAdiabaticError):
    pass


class StepCollapse(NLSAdiabaticError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class UnsupportedTopology(NLSAdiabaticError):
    pass


class DegenerateSpectrum(NLSAdiabaticError):
    pass


class EndpointsNotLinear(NLSAdiabaticError):
    pass


class ConfigError(NLSAdiabaticError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
