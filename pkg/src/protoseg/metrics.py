"""Segmentation metrics: per-class IoU, mean-IoU, Dice and binary IoU.

Counts accumulate across episodes before any ratio is taken, so a run's
mean-IoU does not depend on the order episodes were evaluated in.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NoForeground, ShapeMismatch


@dataclass
class Confusion:
    """Pixel counts ``[tp, fp, fn]`` per foreground class id."""

    counts: dict = field(default_factory=dict)

    def __add__(self, other: "Confusion") -> "Confusion":
        out = {k: v.copy() for k, v in self.counts.items()}
        for k, v in other.counts.items():
            out[k] = out[k] + v if k in out else v.copy()
        return Confusion(out)

    def tp(self, c):
        return int(self.counts[c][0])

    def fp(self, c):
        return int(self.counts[c][1])

    def fn(self, c):
        return int(self.counts[c][2])

    def class_ids(self) -> list:
        return sorted(self.counts)

    def per_class_iou(self) -> dict:
        out = {}
        for c in self.class_ids():
            tp, fp, fn = self.counts[c]
            if tp + fp + fn > 0:
                out[c] = tp / (tp + fp + fn)
        return out

    def per_class_dice(self) -> dict:
        out = {}
        for c in self.class_ids():
            tp, fp, fn = self.counts[c]
            if tp + fp + fn > 0:
                out[c] = 2 * tp / (2 * tp + fp + fn)
        return out


def confusion(pred, gt, n_classes: int, class_ids=None) -> Confusion:
    """Counts for local labels ``1..n_classes``, keyed by ``class_ids`` if given."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    keys = list(class_ids) if class_ids is not None else list(range(1, n_classes + 1))
    counts = {}
    for c, key in zip(range(1, n_classes + 1), keys):
        p, g = pred == c, gt == c
        counts[key] = np.array([np.sum(p & g), np.sum(p & ~g), np.sum(~p & g)], dtype=np.int64)
    return Confusion(counts)


def _merge(confusions) -> Confusion:
    if isinstance(confusions, Confusion):
        return confusions
    total = Confusion()
    for c in confusions:
        total = total + c
    return total


def mean_iou(confusions) -> float:
    """Unweighted mean of per-class IoU; classes with an empty union are skipped."""
    ious = _merge(confusions).per_class_iou()
    if not ious:
        raise NoForeground("no class has a nonempty union")
    return float(np.mean([ious[c] for c in sorted(ious)]))


def dice(confusions) -> float:
    scores = _merge(confusions).per_class_dice()
    if not scores:
        raise NoForeground("no class has a nonempty union")
    return float(np.mean([scores[c] for c in sorted(scores)]))


def binary_iou(pred, gt) -> float:
    """Mean of foreground IoU (all classes merged) and background IoU.

    A side whose union is empty counts as 1.0.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    out = []
    for p, g in ((pred > 0, gt > 0), (pred == 0, gt == 0)):
        union = np.sum(p | g)
        out.append(1.0 if union == 0 else np.sum(p & g) / union)
    return float(np.mean(out))


def mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())
