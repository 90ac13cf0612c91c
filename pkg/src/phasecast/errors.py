"""Shared error types that the CLI maps to distinct exit codes."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment/model configuration."""


class DataError(ValueError):
    """Problems reading or validating an input dataset."""
