"""Exception types shared across the package."""


class MageError(Exception):
    """Base class for all package-specific failures."""


class PositivityError(MageError):
    """A form or metric that must be positive definite is not."""


class SolverError(MageError):
    """A linear or Newton solve failed to converge."""


class OracleCheckError(MageError):
    """A closed-form reference solution failed its own residual self-test."""


class ConfigError(MageError):
    """A run configuration file is malformed or inconsistent."""
