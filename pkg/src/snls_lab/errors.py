"""Shared exception types and process exit codes."""

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_ASSUMPTION_VETO = 3
EXIT_NUMERICAL_ABORT = 4


class ConfigError(ValueError):
    """A configuration failed validation; the message names the offending key."""


class AssumptionVeto(RuntimeError):
    """A run was refused because the noise model violates a required assumption."""


class NumericalAbort(RuntimeError):
    """Integration was stopped (overflow guard or non-finite state).

    ``time_index`` is the step index at which the abort fired.
    """

    def __init__(self, message: str, time_index: int | None = None):
        super().__init__(message)
        self.time_index = time_index
