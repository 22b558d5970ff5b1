"""Exceptions for wgqdpy"""


class WGQDException(Exception):
    pass


class ConfigurationError(WGQDException):
    pass


class GeometryError(WGQDException):
    pass


class StabilityError(WGQDException):
    """Field values became non-finite or grew without bound"""

    def __init__(self, message: str, step_index: int):
        super().__init__(message)
        self.step_index = step_index


class NonConvergenceError(WGQDException):
    pass


class MonitorConfigurationError(WGQDException):
    pass


class FitConvergenceError(WGQDException):
    pass


class UnreachableTargetError(WGQDException):
    pass
