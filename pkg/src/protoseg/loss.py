"""Pixel-wise cross-entropy losses and their prototype gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeMismatch
from .inference import InferenceConfig, pairwise_similarity_grad, score_map
from .prototype import PrototypeSet, align_mask

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class LossWeights:
    w_s: float = 1.0
    w_q: float = 1.0

    def __post_init__(self):
        if self.w_s < 0 or self.w_q < 0 or self.w_s + self.w_q <= 0:
            raise ConfigError("loss weights must be nonnegative with a positive sum")


@dataclass
class LossReport:
    l_que: float
    l_sup: float
    total: float
    pixel_count: int


def cross_entropy(scores, gt) -> float:
    """Mean negative log-probability of the ground-truth channel over all pixels."""
    scores = np.asarray(scores, dtype=np.float64)
    gt = np.asarray(gt)
    if scores.shape[:2] != gt.shape:
        raise ShapeMismatch(f"score map {scores.shape[:2]} vs mask {gt.shape}")
    if gt.size and (gt.min() < 0 or gt.max() >= scores.shape[-1]):
        raise ShapeMismatch("mask label outside score channels")
    picked = np.take_along_axis(scores, gt[..., None], axis=-1)[..., 0]
    return float(-np.mean(np.log(np.maximum(picked, LOG_FLOOR))))


def total_loss(l_sup: float, l_que: float, w: LossWeights) -> float:
    return w.w_s * l_sup + w.w_q * l_que


def image_loss(features, mask, protos: PrototypeSet, cfg: InferenceConfig, need_feature_grad: bool = True):
    """Cross-entropy of one image and its gradients.

    Returns ``(loss, dL/dfeatures or None, dL/dprototypes)``.
    """
    features = np.asarray(features, dtype=np.float64)
    mask = align_mask(mask, features)
    scores = score_map(features, protos, cfg)
    loss = cross_entropy(scores, mask)
    h, w, d = features.shape
    n = h * w
    q = scores.reshape(n, -1)
    g_logits = q.copy()
    g_logits[np.arange(n), mask.reshape(-1)] -= 1.0
    g_s = (cfg.alpha / n) * g_logits
    gf, gp = pairwise_similarity_grad(cfg.metric, features.reshape(n, d), protos.vectors, g_s)
    return loss, (gf.reshape(h, w, d) if need_feature_grad else None), gp


def support_loss(protos: PrototypeSet, support_features, support_masks, cfg: InferenceConfig) -> float:
    """Cross-entropy of the support images restored by their own prototypes.

    Averaged over all support images; features/masks are flat lists.
    """
    losses = [cross_entropy(score_map(f, protos, cfg), align_mask(m, f)) for f, m in zip(support_features, support_masks)]
    return float(np.mean(losses))


def grad_support_loss(protos: PrototypeSet, support_features, support_masks, cfg: InferenceConfig):
    """Analytic gradient of :func:`support_loss` with respect to every prototype row.

    Returns ``(loss, gradient)`` with the gradient shaped like ``protos.vectors``.
    """
    n_img = len(support_features)
    total, grad = 0.0, np.zeros_like(protos.vectors)
    for f, m in zip(support_features, support_masks):
        loss, _, gp = image_loss(f, m, protos, cfg, need_feature_grad=False)
        total += loss
        grad += gp
    return total / n_img, grad / n_img
