"""Input checks shared by the estimator and the CLI."""
from __future__ import annotations

import numpy as np

from .exceptions import DataError, ShapeMismatch


def check_finite(x, name: str = "array") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains NaN or infinite values")
    return x


def check_image(x, channels: int | None = None) -> np.ndarray:
    x = check_finite(x, "image")
    if x.ndim != 3:
        raise ShapeMismatch(f"expected an H x W x C image, got shape {x.shape}")
    if channels is not None and x.shape[-1] != channels:
        raise ShapeMismatch(f"expected {channels} channels, got {x.shape[-1]}")
    return x


def check_feature_map(f) -> np.ndarray:
    f = check_finite(f, "feature map")
    if f.ndim != 3 or f.shape[-1] < 1:
        raise ShapeMismatch(f"expected an H x W x D feature map, got shape {f.shape}")
    return f


def check_mask(m, shape=None, max_label: int | None = None) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected an H x W mask, got shape {m.shape}")
    if not np.issubdtype(m.dtype, np.integer):
        if not np.all(np.equal(np.mod(m, 1), 0)):
            raise DataError("mask labels must be integers")
        m = m.astype(np.int64)
    if m.size and m.min() < 0:
        raise DataError("mask labels must be nonnegative")
    if max_label is not None and m.size and m.max() > max_label:
        raise DataError(f"mask label {m.max()} exceeds {max_label}")
    if shape is not None and m.shape != tuple(shape):
        raise ShapeMismatch(f"mask shape {m.shape} does not match {tuple(shape)}")
    return m


def check_images_masks(X, y) -> tuple[list, list]:
    X = [check_image(x) for x in X]
    y = [check_mask(m, x.shape[:2]) for x, m in zip(X, y)]
    if len(X) != len(y):
        raise ShapeMismatch(f"{len(X)} images but {len(y)} masks")
    if X and len({x.shape[-1] for x in X}) != 1:
        raise ShapeMismatch("images differ in channel count")
    return X, y
