"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a config file fails validation; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericalError(RuntimeError):
    """Raised when a linear solve fails even after the jitter retry."""
