"""Exception hierarchy shared by every module.

Each class carries a ``module`` tag so the command line runner can report
which stage failed and pick the right exit code.
"""


class PfedwnError(Exception):
    module = "pfedwn"


class ParameterError(PfedwnError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(ParameterError):
    """A value falls outside the domain of a formula (e.g. d < d0)."""

    module = "channel"


class DegenerateInterferenceError(PfedwnError, ValueError):
    """Mean interference is not positive, so no log-normal fit exists."""

    module = "channel"


class NumericalError(PfedwnError, ArithmeticError):
    """Quadrature failed to converge or an iterate became non-finite."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class PartitionError(PfedwnError, ValueError):
    module = "data"


class SplitError(PfedwnError, ValueError):
    module = "data"


class FormatError(PfedwnError, ValueError):
    module = "data"

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class FitError(PfedwnError, ValueError):
    module = "analysis"


class ConfigError(PfedwnError, ValueError):
    """Invalid configuration; ``pointer`` is a JSON pointer to the bad key."""

    module = "runner"

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
