"""Exception types shared across the package.

Three failure families matter to callers: bad configuration, malformed
files, and numerical blow-ups during training or sampling.  The CLI maps
each to a distinct exit code.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration values."""


class DataFormatError(ValueError):
    """A file on disk does not conform to the expected binary layout."""


class NumericsError(ArithmeticError):
    """A numerical invariant broke (non-finite loss, failed convergence)."""
