"""Shared error types mapped to CLI exit codes."""
from __future__ import annotations


class ConfigError(Exception):
    """Invalid or contradictory configuration (CLI exit code 2)."""


class DataError(Exception):
    """Malformed input data such as rule files or run records (exit code 4)."""
