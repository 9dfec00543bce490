"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .tensor import ShapeError


def check_images(X, name: str = "X", dtype=np.float64) -> np.ndarray:
    """Coerce to a finite ``[N, H, W, 3]`` stack in ``[0, 1]``.

    A single ``[H, W, 3]`` image is promoted to a batch of one.
    """
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ShapeError(f"{name} must have shape [N, H, W, 3], got {list(arr.shape)}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinity")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def check_pairs(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_images(X, "X")
    y = check_images(y, "y")
    if X.shape != y.shape:
        raise ShapeError(f"X {list(X.shape)} and y {list(y.shape)} differ in shape")
    return X, y


def check_is_fitted(estimator, attribute: str = "model_") -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
