"""Dense float64 array primitives used throughout the pipeline.

Arrays are plain :class:`numpy.ndarray` objects. Functions never modify
their inputs.
"""
from __future__ import annotations

import numpy as np

from .exceptions import ShapeMismatch, ZeroVector

ZERO_NORM = 1e-30


def as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm.

    Raises :class:`ZeroVector` when the norm is below ``1e-30``.
    """
    v = as_float_array(v)
    norm = np.linalg.norm(v)
    if not norm >= ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector with norm {norm!r}")
    return v / norm


def l2_normalize_rows(x) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise version of :func:`l2_normalize`; also returns the norms."""
    x = as_float_array(x)
    norms = np.linalg.norm(x, axis=-1)
    if x.size and not np.all(norms >= ZERO_NORM):
        bad = int(np.argmin(norms))
        raise ZeroVector(f"row {bad} has norm {norms.flat[bad]!r}")
    return x / norms[..., None], norms


def softmax_last_axis(t) -> np.ndarray:
    t = as_float_array(t)
    shifted = t - t.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_last_axis(t) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest.
    return np.argmax(as_float_array(t), axis=-1)


def upsample_nearest(t, new_h: int, new_w: int) -> np.ndarray:
    """Nearest-neighbour resize of an ``H x W x ...`` array.

    Output pixel ``(i, j)`` copies source ``(floor(i*H/new_h), floor(j*W/new_w))``.
    """
    t = np.asarray(t)
    h, w = t.shape[:2]
    if new_h < h or new_w < w:
        raise ShapeMismatch(f"upsample target {new_h}x{new_w} smaller than {h}x{w}")
    return t[nearest_index(h, new_h)][:, nearest_index(w, new_w)]


def nearest_index(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst) * src) // dst


def concat_channels(ts) -> np.ndarray:
    ts = [as_float_array(t) for t in ts]
    if not ts:
        raise ShapeMismatch("nothing to concatenate")
    hw = ts[0].shape[:2]
    for t in ts[1:]:
        if t.shape[:2] != hw:
            raise ShapeMismatch(f"spatial shapes differ: {hw} vs {t.shape[:2]}")
    return np.concatenate(ts, axis=-1)


def avg_pool2(t) -> np.ndarray:
    """2x2 average pooling of an ``H x W x D`` array (odd edges are dropped)."""
    t = as_float_array(t)
    h, w = t.shape[0] // 2, t.shape[1] // 2
    t = t[: 2 * h, : 2 * w]
    return t.reshape(h, 2, w, 2, -1).mean(axis=(1, 3))
