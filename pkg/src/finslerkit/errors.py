"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for errors raised by finslerkit."""


class MetricError(FinslerError, ValueError):
    """Unknown model, parameter out of range or a non-convex metric."""


class ChartError(FinslerError, ValueError):
    """A point lies outside the chart domain or a path left it."""


class DegenerateError(FinslerError, ValueError):
    """A direction below the guard radius or a near-degenerate flag."""


class JetDepthError(FinslerError):
    """A derivative was requested beyond the order carried by a jet."""


class ShootingError(FinslerError):
    """No convergent shot, or an ambiguous one near the cut locus."""
