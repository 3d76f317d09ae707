"""Exception hierarchy shared by every module of the package."""


class SeroRecencyError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SeroRecencyError, ValueError):
    pass


class InvalidCovarianceError(SeroRecencyError, ValueError):
    pass


class DomainError(SeroRecencyError, ValueError):
    """A parameter lies outside the domain of a density (e.g. variance <= 0)."""


class NumericalSingularityError(SeroRecencyError, ArithmeticError):
    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class InsufficientDataError(SeroRecencyError, ValueError):
    pass


class InsufficientSamplesError(SeroRecencyError, ValueError):
    pass


class ParseError(SeroRecencyError, ValueError):
    """Malformed dataset/config/chain file. Carries line and field context."""

    def __init__(self, message, path=None, line=None, field=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{': '.join([', '.join(where), message])}"
        super().__init__(message)
        self.path = path
        self.line = line
        self.field = field
