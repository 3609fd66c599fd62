"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class CapacityError(ValueError):
    """A requested enumeration or allocation exceeds its size guard."""


class InvariantError(RuntimeError):
    """An internal invariant (e.g. CTMC rate conditions) was violated."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


class IntegrityError(RuntimeError):
    """Stored results disagree with recomputed values."""
