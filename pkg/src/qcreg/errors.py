"""Exception hierarchy shared across the package."""


class QcregError(Exception):
    """Base class for all qcreg errors."""


class MeshParseError(QcregError):
    """Raised when an OFF/OBJ file cannot be parsed."""


class MeshTopologyError(QcregError):
    """Raised when a mesh violates manifoldness or disk topology."""


class DegenerateFaceError(QcregError):
    """Raised when a face area falls below the degeneracy threshold."""


class SolveError(QcregError):
    """Raised when a linear system is singular or loses positive definiteness."""


class PointLocationError(QcregError):
    """Raised when a query point lies outside every triangle."""


class SchemaError(QcregError):
    """Raised on report schema-version mismatch."""
