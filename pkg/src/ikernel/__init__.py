"""Learning radial interaction kernels from particle snapshots.

The package estimates the pairwise interaction kernel of a first-order
particle system from noisy observations of the interaction forces, using a
least-squares fit over an orthonormal basis with a spectral safeguard (the
tamed least-squares estimator). It also ships the numerical companions used to
study the estimator: coercivity and tail-probability checks, moment scaling
experiments, and a Fano-type lower-bound construction.
"""

from .errors import (
    AssemblyError,
    ConfigurationError,
    ContractError,
    DatasetFormatError,
    DependentSeedsError,
    DomainError,
    InfeasibleConstructionError,
    NumericalError,
    PreconditionError,
    RetryExceededError,
    SingularityError,
    UnboundedBasisError,
    UnsupportedMeasureError,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AssemblyError",
    "ConfigurationError",
    "ContractError",
    "DatasetFormatError",
    "DependentSeedsError",
    "DomainError",
    "InfeasibleConstructionError",
    "NumericalError",
    "PreconditionError",
    "RetryExceededError",
    "SingularityError",
    "UnboundedBasisError",
    "UnsupportedMeasureError",
]
