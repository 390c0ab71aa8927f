"""Exception types shared across the package."""


class FormatError(ValueError):
    """Malformed or unusable input (CLI exit code 2)."""


class InvariantError(RuntimeError):
    """An internal consistency check failed (CLI exit code 3)."""
