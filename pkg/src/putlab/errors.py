"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config problems exit 2,
regime/domain rejections exit 3, missing artifacts exit 4 and solver
failures exit 5.
"""

from __future__ import annotations


class PutLabError(Exception):
    """Base class for all putlab errors."""


class ConfigError(PutLabError):
    """Invalid configuration document; carries a field path for diagnostics."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


class DbarPositive(PutLabError):
    """Model has dbar > 0, outside the near-maturity regimes handled here."""


class RegimeMismatch(PutLabError):
    """Operation requested for the wrong dbar regime."""


class MissingArtifact(PutLabError):
    """A persisted surface or report was requested but does not exist."""


class NonConvergence(PutLabError):
    """Iterative solver exhausted its budget."""


class TruncationFailure(PutLabError):
    """Series truncation cannot reach the requested tolerance."""


class RootBracketFailure(PutLabError):
    """Root bracket for the European critical price could not be established."""


class DegenerateBoundary(PutLabError):
    """No exercise node at a time level; the grid is too coarse there."""
