"""Exception hierarchy shared by all modules.

Each class carries the process exit status the command line uses for it.
"""


class WPDegenError(Exception):
    exit_code = 1


class InputError(WPDegenError, ValueError):
    """Argument outside the documented domain of an operation."""

    exit_code = 2


class DomainError(InputError):
    """Evaluation point outside a chart, annulus or stencil margin."""


class ConfigError(WPDegenError):
    exit_code = 2


class SolverError(WPDegenError):
    """Linear or Newton solve failed; ``history`` holds residual norms."""

    exit_code = 3

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


class PrecisionError(WPDegenError):
    exit_code = 4


class FitError(PrecisionError):
    """Ill-conditioned design matrix or unusable sample set."""


class QuadratureError(PrecisionError):
    pass
