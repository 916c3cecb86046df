"""Input validation helpers shared by the estimator-style classes."""

from __future__ import annotations

import numpy as np


def check_array(X, *, name: str = "X", ndim: int = 2, dtype=np.float64) -> np.ndarray:
    """Coerce to a contiguous ndarray of the given rank and check finiteness."""
    a = np.asarray(X, dtype=dtype)
    if a.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(a)


def check_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise RuntimeError(f"{type(est).__name__} is not fitted yet (missing {attr})")


def check_same_features(n_expected: int, X: np.ndarray, *, name: str = "X") -> None:
    if X.shape[1] != n_expected:
        raise ValueError(
            f"{name} has {X.shape[1]} features, the fitted model expects {n_expected}"
        )
