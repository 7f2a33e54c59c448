"""Exception types raised across the library.

Validators raise the most specific class that applies; the CLI maps these
onto process exit codes (validation failures exit 2, solver failures 3,
cap violations 4).
"""

from __future__ import annotations


class CombForgeError(Exception):
    """Base class for all library errors."""


class IndexCollision(CombForgeError):
    """Two operands carry the same system index."""


class IndexNotFound(CombForgeError):
    """A referenced system index is absent from the signature."""


class SignatureMismatch(CombForgeError):
    """System labels or dimensions do not line up as required."""


class NotPositive(CombForgeError):
    """An operator that must be positive semidefinite is not.

    ``witness`` carries the offending minimum eigenvalue, ``which`` an
    optional identifier (effect outcome, block name) for the operator.
    """

    def __init__(self, message: str, witness: float | None = None, which=None):
        super().__init__(message)
        self.witness = witness
        self.which = which


class CausalityViolation(CombForgeError):
    """A comb fails its recursive trace condition at chain level ``level``."""

    def __init__(self, message: str, level: int, residual: float | None = None):
        super().__init__(message)
        self.level = level
        self.residual = residual


class NotAChannel(CombForgeError):
    """A claimed channel Choi operator is not trace preserving; ``tooth``
    identifies which network element failed."""

    def __init__(self, message: str, tooth: int | None = None):
        super().__init__(message)
        self.tooth = tooth


class NotAState(CombForgeError):
    """A claimed density operator is not positive with unit trace."""


class NormalizationViolation(CombForgeError):
    """Tester effects fail their normalization condition at chain level
    ``level``."""

    def __init__(self, message: str, level: int, residual: float | None = None):
        super().__init__(message)
        self.level = level
        self.residual = residual


class ProbeNotNormalized(CombForgeError):
    """The terminal element of a tester normalization chain has trace != 1."""


class BadProbability(CombForgeError):
    """A probability table has negative entries or non-unit column sums."""


class DegenerateRobustness(CombForgeError):
    """Noise reconstruction was requested for a collection whose robustness
    is numerically zero."""


class CapExceeded(CombForgeError):
    """A combinatorial size (vector outcomes, total dimension) exceeds the
    configured cap."""


class ZeroDual(CombForgeError):
    """A dual solution carries no weight, so no witness ensemble can be
    normalized from it."""


class SolverFailure(CombForgeError):
    """The conic solver could not certify a solution; ``diagnostics`` holds
    its final residuals."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SchemaError(CombForgeError):
    """A JSON document does not match the interchange schema."""
