"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 3,
numerical failures (gap closures, non-convergence, unresolvable branch
matching) exit 2, and a clean run that fails the integer correspondence
exits 1.
"""


class ScrewtbError(Exception):
    """Base class for all package errors."""


class ConfigError(ScrewtbError):
    """Invalid run configuration; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class GapClosedError(ScrewtbError):
    """The spectrum touches the Fermi level where a gap is required."""


class ConvergenceError(ScrewtbError):
    """A numerical estimate failed its convergence contract."""


class BranchMatchingError(ScrewtbError):
    """Eigenvalue branches through the Fermi level could not be resolved."""
