"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class WheelGinsError(Exception):
    exit_code = 1


class ConfigError(WheelGinsError):
    exit_code = 1


class DataError(WheelGinsError):
    exit_code = 2


class GeometryError(WheelGinsError, ValueError):
    """Degenerate geometry: poles, vertical wheel axis, gimbal lock and similar."""

    exit_code = 2


class DivergenceError(WheelGinsError):
    exit_code = 3


class NoConvergence(WheelGinsError):
    exit_code = 4
