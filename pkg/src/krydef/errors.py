"""Exception types shared across the package."""


class KrydefError(Exception):
    """Base class for all krydef errors."""


class RankDeficiencyError(KrydefError):
    """A least-squares matrix has a numerically dependent column."""


class SingularMatrixError(KrydefError):
    """A dense solve hit a pivot below the singularity threshold."""


class EigenConvergenceError(KrydefError):
    """The dense eigensolver did not deflate within its sweep budget."""


class ZeroVectorError(KrydefError):
    """An operation received a zero vector where a direction is required."""


class MatrixMarketError(KrydefError):
    """Malformed Matrix Market input; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(KrydefError):
    """Invalid experiment or solver configuration; carries a field path."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
