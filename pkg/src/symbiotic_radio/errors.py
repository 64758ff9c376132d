"""Exception types raised across the package."""


class SymbioticRadioError(Exception):
    """Base class for all package errors."""


class NonPSD(SymbioticRadioError, ValueError):
    """A matrix expected to satisfy I + A > 0 does not."""


class NoConvergence(SymbioticRadioError, RuntimeError):
    """An iterative routine hit its iteration cap."""


class Infeasible(SymbioticRadioError, ValueError):
    """The requested BD sum-rate threshold cannot be met."""


class WrongMode(SymbioticRadioError, ValueError):
    """A formula was called outside the antenna configuration it covers."""


class NonPositiveDistance(SymbioticRadioError, ValueError):
    """A path-loss distance was zero or negative."""


class ConfigError(SymbioticRadioError, ValueError):
    """A configuration file or override is invalid."""
