"""Exception types shared across the package."""


class InputError(ValueError):
    """Bad user input: malformed files, out-of-range ids, incompatible options."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
