"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary contract violations; the classes
here exist where callers need to branch on the failure kind (the CLI maps
them to exit codes).
"""


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad value, missing id)."""


class DivergenceError(RuntimeError):
    """A trajectory or integration left the finite range.

    Carries the step index / time stamp at which the blow-up was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CapacityError(ValueError):
    """Problem size exceeds an enumeration cap."""
