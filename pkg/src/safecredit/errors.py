"""Shared exception types."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or out of range."""


class UsageError(RuntimeError):
    """An API was called out of contract (wrong mode, wrong order, bad input)."""
