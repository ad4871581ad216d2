class PimError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PimError, ValueError):
    pass


class CoverageError(PimError, ValueError):
    pass


class DegenerateScaleError(PimError, ValueError):
    pass


class ConfigurationError(PimError):
    pass


class EvaluationError(PimError, ValueError):
    pass


class SearchSpaceTooLarge(PimError):
    pass


class SpecParseError(PimError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
