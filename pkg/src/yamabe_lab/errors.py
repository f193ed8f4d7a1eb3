"""Exception hierarchy shared by all modules."""


class YamabeLabError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(YamabeLabError, ValueError):
    pass


class DomainError(YamabeLabError, ValueError):
    """An argument lies outside the domain of a profile or solution."""


class InfeasibleError(YamabeLabError, ValueError):
    pass


class InsufficientDataError(YamabeLabError, ValueError):
    pass


class WrongClassError(YamabeLabError, ValueError):
    """Raised when a warping function is in the other conformal class."""


class PreconditionError(YamabeLabError, ValueError):
    pass


class CannotExtrapolateError(YamabeLabError, ValueError):
    pass


class NumericError(YamabeLabError, RuntimeError):
    """A solver failed to converge; ``diagnostics`` holds what was seen."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConstructionFailedError(NumericError):
    pass


class ConfigError(YamabeLabError, ValueError):
    """Scenario configuration could not be parsed or validated."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line
