"""Exception hierarchy shared by the library and the CLI."""


class ObserverError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ObserverError, ValueError):
    """Invalid dimensions, unknown registry names or out-of-range settings."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigParseError(ConfigurationError):
    """Scenario file could not be parsed."""

    def __init__(self, message, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class UnobservablePlantError(ObserverError):
    """Observability matrix is singular or too ill-conditioned to invert."""

    def __init__(self, message, condition):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


class SimulationError(ObserverError):
    """Integration produced a non-finite derivative or state."""

    def __init__(self, message, t_fail, last_valid_time=None, partial=None):
        super().__init__(f"{message} at t={t_fail:.6g}")
        self.t_fail = t_fail
        self.last_valid_time = last_valid_time
        self.partial = partial
