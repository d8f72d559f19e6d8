class FlowPlateError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(FlowPlateError, ValueError):
    pass


class AssemblyError(FlowPlateError):
    pass


class SolverError(FlowPlateError):
    def __init__(self, message, **report):
        super().__init__(message)
        self.report = report


class CalibrationError(FlowPlateError):
    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class PreconditionError(FlowPlateError, ValueError):
    pass
