class DfuseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DfuseError, ValueError):
    """Invalid scenario, network or configuration parameters."""


class DegenerateStatisticError(DfuseError, ArithmeticError):
    """A normalized statistic has a vanishing denominator."""


class DegenerateScenarioError(ConfigurationError, DegenerateStatisticError):
    """A scenario whose normalized statistics are degenerate before any trial runs."""
