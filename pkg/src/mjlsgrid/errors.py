"""Exception hierarchy.

ConfigError maps to CLI exit code 2, SolverError and its subclasses to
exit code 1.
"""


class MjlsError(Exception):
    """Base class for all package errors."""


class ConfigError(MjlsError):
    """Invalid configuration file or model data."""


class SolverError(MjlsError):
    """A numerical routine could not produce the requested result."""


class UnstableDynamicsError(SolverError):
    """A fixed-point solve was attempted on non-contracting dynamics."""


class NotStabilizingError(SolverError):
    """A gain expected to stabilize the closed loop does not."""


class SignConditionError(SolverError):
    """R + T_G(P) lost uniform positive definiteness at some cell."""


class ConvergenceError(SolverError):
    """An iteration hit its step cap before reaching tolerance."""


class GammaTooSmallError(SolverError):
    """gamma^2 I + T_F(P1) (or I + T_B) lost definiteness during the backward sweep."""


class GainNotFoundError(SolverError):
    """The output-injection gain search failed (this does not prove undetectability)."""


class DegenerateKernelError(SolverError):
    """A transition-density row carries no probability mass."""
