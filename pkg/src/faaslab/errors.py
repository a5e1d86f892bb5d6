"""Exception hierarchy shared across the package."""


class FaasLabError(Exception):
    """Base class for all package errors."""


class ConfigError(FaasLabError):
    """Invalid configuration, workload definition, or input file."""


class SimulationError(FaasLabError):
    """Illegal operation against the simulation engine or environment."""


class MetricsError(FaasLabError):
    """Metric undefined for the requested scope, or missing calibration."""
