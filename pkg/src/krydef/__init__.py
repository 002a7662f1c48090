"""krydef: deflated restarted GMRES for sparse systems with many right-hand sides.

The first right-hand side is solved with a deflated restarted GMRES that
extracts approximate eigenvectors of the small-magnitude eigenvalues as a
byproduct; subsequent right-hand sides interleave cheap minimum-residual
projections over those eigenvectors with ordinary restarted GMRES cycles.
Block variants handle groups of right-hand sides jointly.  The harness module
and the ``krydef`` CLI run the packaged benchmark experiments and emit
machine-readable reports.
"""

from .errors import (
    ConfigError,
    EigenConvergenceError,
    KrydefError,
    MatrixMarketError,
    RankDeficiencyError,
    SingularMatrixError,
    ZeroVectorError,
)

__all__ = [
    "ConfigError",
    "EigenConvergenceError",
    "KrydefError",
    "MatrixMarketError",
    "RankDeficiencyError",
    "SingularMatrixError",
    "ZeroVectorError",
]

__version__ = "0.1.0"
