"""Exception types shared across the simulator."""


class CavSimError(Exception):
    """Base class for all simulator errors."""


class NumericFault(CavSimError):
    """A non-finite value reached the plant or controller (bug upstream)."""


class HorizonExhausted(CavSimError):
    """A trajectory estimate was queried beyond its last horizon sample."""


class ColdStart(CavSimError):
    """An estimator was asked to act before receiving any target beacon."""


class ConfigError(CavSimError):
    """Scenario configuration is invalid; message carries the field path."""
