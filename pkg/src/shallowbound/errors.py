"""Exception hierarchy shared by the numerical modules and the CLI."""


class ShallowBoundError(Exception):
    """Base class for all package errors."""


class NearSingular(ShallowBoundError):
    """``I + eps*T0(k)`` is numerically singular on the current grid."""

    def __init__(self, msg, condition=None):
        super().__init__(msg)
        self.condition = condition


class NoConvergence(ShallowBoundError):
    """An iteration stopped without meeting its tolerance.

    ``best`` carries the best iterate found (a ``PoleResult`` for the
    pole search, ``None`` elsewhere).
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class AtPole(ShallowBoundError):
    """The resolvent was requested too close to its pole."""


class ParseError(ShallowBoundError):
    """Syntax or name error in a coefficient expression."""

    def __init__(self, msg, offset):
        super().__init__(f"{msg} (at offset {offset})")
        self.offset = offset


class ConfigError(ShallowBoundError):
    """Invalid or incomplete scenario configuration."""
