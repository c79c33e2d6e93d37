"""Input validation helpers shared by the public functions and estimators."""

import numpy as np
from sklearn.utils import check_array

from .errors import DomainError


def check_particles(X, name="X", min_particles=3):
    """Return ``X`` as a float array of shape (M, N, d).

    A single configuration of shape (N, d) is promoted to (1, N, d).
    """
    X = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float64,
                    input_name=name)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"{name} must have shape (M, N, d) or (N, d), got {X.shape}")
    if X.shape[1] < min_particles:
        raise DomainError(f"{name} needs at least {min_particles} particles, got {X.shape[1]}")
    if X.shape[2] < 1:
        raise ValueError(f"{name} has zero spatial dimension")
    return X


def check_pair(X, Y):
    """Validate positions and observations of identical shape."""
    X = check_particles(X, "X")
    Y = check_particles(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"X and Y shapes differ: {X.shape} vs {Y.shape}")
    return X, Y


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
