"""Input validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np

from .trials import Trial


def check_trial_array(X, *, channels: int | None = None) -> np.ndarray:
    """Coerce X to a finite (n, channels, samples) float64 array."""
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Trial):
        X = np.stack([t.data for t in X])
    x = np.asarray(X, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected trials shaped (n, channels, samples), got {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError(f"trial array has an empty dimension: {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("trial array contains non-finite values")
    if channels is not None and x.shape[1] != channels:
        raise ValueError(f"expected {channels} channels, got {x.shape[1]}")
    return x


def check_labels(y, n: int) -> np.ndarray:
    labels = np.asarray(y)
    if labels.ndim != 1 or labels.shape[0] != n:
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == labels.astype(np.int64)):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
    return labels
