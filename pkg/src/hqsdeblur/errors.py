"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so solver code should raise
the most specific class that applies.
"""


class ConfigError(ValueError):
    """Invalid configuration value or incompatible option combination."""


class FormatError(ValueError):
    """Malformed input file (kernel text, motion field, config, cache)."""


class DivergenceError(RuntimeError):
    """A solver produced non-finite values (spectral radius >= 1 suspected).

    Carries the partial ``SolveReport`` in ``report`` when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
