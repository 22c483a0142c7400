"""Exception types shared across the package."""


class AffineBVError(Exception):
    """Base class for all package errors."""


class GridError(AffineBVError):
    """Grid mismatch or invalid grid parameters."""


class ShapeError(AffineBVError):
    """Invalid or out-of-margin shape descriptor."""


class ConfigError(AffineBVError):
    """Invalid run configuration (CLI exit code 2)."""
