"""Exception hierarchy shared by the simulator modules."""


class IonTrapError(Exception):
    """Base class for all simulator errors."""


class GridError(IonTrapError, ValueError):
    pass


class BasisMismatchError(IonTrapError, ValueError):
    pass


class SupportError(IonTrapError, ValueError):
    """A wave function has non-negligible amplitude where it must not."""


class SingularPointError(IonTrapError, ValueError):
    """Mixing angle or its derivatives are undefined at the requested point."""


class NumericalError(IonTrapError, RuntimeError):
    """A numerical procedure failed or an internal cross-check disagreed."""


class ConvergenceError(NumericalError):
    pass


class NoPeakFoundError(NumericalError):
    pass


class BudgetExhaustedError(IonTrapError, RuntimeError):
    pass


class ConfigError(IonTrapError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None and line < 0:
            message = f"override #{-line}: {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
