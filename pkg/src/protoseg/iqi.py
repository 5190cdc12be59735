"""Iterative query inference.

Prototypes are refined by gradient descent on the support loss. Every
iterate segments the query, and the per-iterate score maps are fused with
weights equal to each iterate's support IoU. The starting prototypes are
iterate 1, so ``n_prototypes=1`` is plain prototype inference.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DegenerateFusion, DivergenceWarning, NoForeground
from .inference import InferenceConfig, predict, predict_mask, score_map
from .loss import grad_support_loss
from .metrics import confusion, mean_iou
from .prototype import PrototypeSet, align_mask

DIVERGENCE_RATIO = 10.0


@dataclass(frozen=True)
class IqiConfig:
    eta: float = 0.05
    n_prototypes: int = 5

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.n_prototypes < 1:
            raise ConfigError("n_prototypes must be at least 1")


@dataclass
class IqiIterate:
    prototypes: PrototypeSet
    support_predictions: list
    rho: float
    support_loss: float


@dataclass
class IqiTrace:
    iterates: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.iterates)

    @property
    def weights(self) -> np.ndarray:
        return np.array([it.rho for it in self.iterates])

    @property
    def degenerate(self) -> bool:
        return len(self.iterates) > 1 and not np.any(self.weights > 0)


def support_iou(protos: PrototypeSet, support_features, support_masks, cfg: InferenceConfig, predictions=None) -> float:
    """Foreground mean-IoU of the support images restored by ``protos``.

    Counts are pooled over all support images per class, then averaged
    over the ``C`` classes. Returns 0.0 if no class has a nonempty union.
    """
    if predictions is None:
        predictions = [predict(f, protos, cfg) for f in support_features]
    conf = [confusion(p, align_mask(m, p), protos.way) for p, m in zip(predictions, support_masks)]
    try:
        return mean_iou(conf)
    except NoForeground:
        return 0.0


def _evaluate(protos, support_features, support_masks, cfg):
    loss, grad = grad_support_loss(protos, support_features, support_masks, cfg)
    preds = [predict(f, protos, cfg) for f in support_features]
    rho = support_iou(protos, support_features, support_masks, cfg, predictions=preds)
    return IqiIterate(protos, preds, rho, loss), grad


def refine_prototypes(p0: PrototypeSet, support_features, support_masks, cfg_inf: InferenceConfig, cfg_iqi: IqiConfig) -> IqiTrace:
    """Collect ``cfg_iqi.n_prototypes`` prototype sets, starting from ``p0``.

    ``support_features``/``support_masks`` are flat lists over all ``C*K``
    support images; every prototype row, background included, is updated.
    """
    trace = IqiTrace()
    current, grad = _evaluate(p0.copy(), support_features, support_masks, cfg_inf)
    trace.iterates.append(current)
    for n in range(2, cfg_iqi.n_prototypes + 1):
        nxt = PrototypeSet(current.prototypes.vectors - cfg_iqi.eta * grad)
        it, grad = _evaluate(nxt, support_features, support_masks, cfg_inf)
        if it.support_loss > DIVERGENCE_RATIO * current.support_loss:
            msg = f"support loss rose from {current.support_loss:.4g} to {it.support_loss:.4g} at iterate {n}"
            trace.warnings.append(msg)
            warnings.warn(msg, DivergenceWarning, stacklevel=2)
        trace.iterates.append(it)
        current = it
    return trace


def fuse_score_maps(score_maps, weights) -> np.ndarray:
    """Argmax of the weighted sum of score maps (ties go to the lowest index)."""
    total = np.zeros_like(score_maps[0])
    for s, w in zip(score_maps, weights):
        total += w * s
    return predict_mask(total)


def fused_prediction(query_features, trace: IqiTrace, cfg_inf: InferenceConfig) -> np.ndarray:
    """Query mask from all iterates of ``trace``.

    With a single iterate this is exactly the base prediction of that
    iterate. Only query features enter here, never query labels.
    """
    if len(trace) == 1:
        return predict(query_features, trace.iterates[0].prototypes, cfg_inf)
    if trace.degenerate:
        warnings.warn("all fusion weights are zero", DegenerateFusion, stacklevel=2)
    maps = [score_map(query_features, it.prototypes, cfg_inf) for it in trace.iterates]
    return fuse_score_maps(maps, trace.weights)
