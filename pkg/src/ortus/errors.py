"""Shared exception hierarchy."""


class OrtusError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(OrtusError):
    """A configuration value is invalid or inconsistent with another."""
