"""Exception hierarchy shared across the package.

Validation problems raise subclasses of ValueError so callers that build
models programmatically can catch them uniformly; numerical failures during
solves raise subclasses of RuntimeError.
"""


class FeederFormatError(ValueError):
    """Feeder document violates the schema (missing field, bad type, bad value)."""


class TopologyError(ValueError):
    """Feeder graph is structurally unusable (islands, duplicate ids, no slack)."""


class ConfigurationError(ValueError):
    """Inconsistent run configuration (dimension mismatches, bad option values)."""


class IllConditionedElementError(ValueError):
    """A branch impedance block is singular or otherwise unusable."""


class ConvergenceError(RuntimeError):
    """Newton iteration exhausted its budget without meeting tolerance."""

    def __init__(self, message, max_mismatch=None, iterations=None):
        super().__init__(message)
        self.max_mismatch = max_mismatch
        self.iterations = iterations


class SingularJacobianError(RuntimeError):
    """Jacobian factorization failed (numerically singular system)."""


class InfeasibleBaseCaseError(RuntimeError):
    """Base operating point (lambda = 0) violates an operating limit."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class ZeroDirectionError(ValueError):
    """Requested a continuation along an identically-zero variation vector."""


class DesignRankError(RuntimeError):
    """Collocation design matrix is rank deficient for the requested fit."""
