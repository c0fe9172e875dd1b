"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the CLI prints and
maps to a nonzero exit status.
"""


class DaeError(Exception):
    code = "error"


class DimensionMismatch(DaeError, ValueError):
    code = "dimension-mismatch"


class SingularMass(DaeError):
    code = "singular-mass"


class RankDeficientConstraint(DaeError):
    code = "rank-deficient-constraint"


class SingularSchur(DaeError):
    code = "singular-schur"


class SingularShift(DaeError):
    code = "singular-shift"


class PolynomialPartError(DaeError):
    code = "polynomial-degree"


class EmptyBasis(DaeError):
    code = "empty-basis"


class BasisMismatch(DaeError):
    code = "basis-mismatch"


class RiccatiError(DaeError):
    code = "riccati-failure"


class InconsistentInitialState(DaeError):
    code = "inconsistent-initial-state"


class GeometryError(DaeError, ValueError):
    code = "geometry"


class MatrixFormatError(DaeError, ValueError):
    code = "matrix-format"


class DuplicateEntry(MatrixFormatError):
    code = "duplicate-entry"


class ConfigError(DaeError, ValueError):
    code = "config"
