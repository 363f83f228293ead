"""Input checks shared by the estimators (array coercion, shape and label validation)."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError


def check_image(x, n_channels: int | None = None) -> np.ndarray:
    """Coerce a single C x H x W image to float64."""
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"expected a C x H x W image, got shape {x.shape}")
    if n_channels is not None and x.shape[0] != n_channels:
        raise DimensionError(f"expected {n_channels} channels, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InputError("image contains NaN or Inf")
    return x


def check_images(X, n_channels: int | None = None, allow_empty: bool = False) -> np.ndarray:
    """Coerce a batch (N x C x H x W) or a single image to a float64 batch."""
    X = np.asarray(getattr(X, "data", X), dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise DimensionError(f"expected N x C x H x W images, got shape {X.shape}")
    if not allow_empty and X.shape[0] == 0:
        raise InputError("empty image batch")
    if n_channels is not None and X.shape[1] != n_channels:
        raise DimensionError(f"expected {n_channels} channels, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InputError("images contain NaN or Inf")
    return X


def check_labels(y, n_samples: int, n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise DimensionError(f"labels shape {y.shape} does not match {n_samples} samples")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InputError("labels must be integers")
        y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise InputError("labels must be non-negative")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise InputError(f"label {int(y.max())} out of range for {n_classes} classes")
    return y.astype(np.int64)


def check_probability(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InputError(f"{name} must lie in [0, 1], got {value}")
    return value
