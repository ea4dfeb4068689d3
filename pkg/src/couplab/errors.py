"""Exception hierarchy shared by every couplab module."""


class CouplabError(Exception):
    pass


class DomainError(CouplabError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class IntegrationError(CouplabError, ArithmeticError):
    """A solver produced a non-finite state.

    ``step`` is the index of the Euler step whose output was non-finite.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ReplayError(CouplabError):
    """A recorded trajectory cannot be replayed (missing or inconsistent noise)."""


class FitError(CouplabError):
    pass


class ConfigError(CouplabError, ValueError):
    pass
