"""Exception hierarchy shared by all fvhom modules."""


class FvhomError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FvhomError):
    """Invalid configuration or violated input precondition."""


class AssemblyError(FvhomError):
    """Finite-volume assembly failed (e.g. nonpositive edge coefficient)."""


class UnsupportedDiscretizationError(AssemblyError):
    """The requested coefficient/scheme combination is not discretizable here."""


class FactorizationError(FvhomError):
    """Incomplete factorization hit a zero or near-zero pivot."""

    def __init__(self, message: str, row: int):
        super().__init__(message)
        self.row = row


class SolveError(FvhomError):
    """Iterative solver failed; carries the final solve report when available."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DomainError(FvhomError):
    """A query point lies outside the supported domain."""


class MeshMismatchError(FvhomError):
    """Operation combined fields living on different meshes."""
