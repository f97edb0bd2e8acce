"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or parameters outside their documented range."""


class FitError(RuntimeError):
    """Polynomial regression could not be solved (rank deficiency, bad data)."""
