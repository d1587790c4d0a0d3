"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
NumericalError (and subclasses) -> 2, ProbeFailure -> 3.
"""

from __future__ import annotations


class HJBError(Exception):
    """Base class for package errors."""


class ConfigError(HJBError):
    """Invalid configuration: bad file, bad schema, inconsistent options."""


class NumericalError(HJBError):
    """Numerical failure while solving (divergence, non-finite values)."""


class CFLError(NumericalError):
    """A time-step restriction is violated and the run was not forced."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SchemeError(NumericalError):
    """The nonlinear step solver failed (iteration cap, NaN at a node)."""


class ProbeFailure(HJBError):
    """A structural probe (monotonicity, comparison, a-priori bound) failed."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness
