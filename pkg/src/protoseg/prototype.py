"""Masked average pooling of support features into class prototypes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import resize_mask_nearest
from .exceptions import EmptyBackground, EmptyClassMask, ShapeMismatch


@dataclass
class PrototypeSet:
    """Row 0 is the background prototype, row ``c`` the prototype of class ``c``."""

    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise ShapeMismatch("a prototype set needs a background row and at least one class row")

    @classmethod
    def from_parts(cls, background, foreground) -> "PrototypeSet":
        return cls(np.vstack([np.asarray(background)[None, :], np.asarray(foreground)]))

    @property
    def background(self) -> np.ndarray:
        return self.vectors[0]

    @property
    def foreground(self) -> np.ndarray:
        return self.vectors[1:]

    @property
    def way(self) -> int:
        return self.vectors.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "PrototypeSet":
        return PrototypeSet(self.vectors.copy())


def align_mask(mask, feature) -> np.ndarray:
    h, w = np.shape(feature)[:2]
    mask = np.asarray(mask)
    if mask.shape != (h, w):
        mask = resize_mask_nearest(mask, h, w)
    return mask


def _pooled_mean(features, masks, label: int) -> tuple[np.ndarray | None, int]:
    # per-image masked mean, then mean over the images that have the label
    total, count = None, 0
    for f, m in zip(features, masks):
        f = np.asarray(f, dtype=np.float64)
        sel = align_mask(m, f) == label
        n = int(sel.sum())
        if n == 0:
            continue
        v = f[sel].sum(axis=0) / n
        total = v if total is None else total + v
        count += 1
    if count == 0:
        return None, 0
    return total / count, count


def foreground_prototype(support_features, support_masks, c: int) -> np.ndarray:
    if len(support_features) != len(support_masks):
        raise ShapeMismatch("features and masks differ in count")
    proto, _ = _pooled_mean(support_features, support_masks, c)
    if proto is None:
        raise EmptyClassMask(f"no support shot contains class {c}")
    return proto


def background_prototype(support_features, support_masks) -> np.ndarray:
    """Pool background pixels over every support image (flat or per-class nested lists)."""
    feats, masks = _flatten(support_features), _flatten(support_masks)
    proto, _ = _pooled_mean(feats, masks, 0)
    if proto is None:
        raise EmptyBackground("no support image has a background pixel")
    return proto


def _flatten(xs) -> list:
    if xs and isinstance(xs[0], (list, tuple)):
        return [x for group in xs for x in group]
    return list(xs)


def build_prototype_set(support_features, support_masks) -> PrototypeSet:
    """Prototypes from ``C`` lists of ``K`` support features/masks.

    The prototype of class ``c`` pools only the shots sampled for ``c``; the
    background prototype pools all ``C*K`` images.
    """
    fg = [foreground_prototype(f, m, c) for c, (f, m) in enumerate(zip(support_features, support_masks), start=1)]
    bg = background_prototype(support_features, support_masks)
    return PrototypeSet.from_parts(bg, np.array(fg))
