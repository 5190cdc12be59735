"""Pixel-to-prototype similarity, score maps and hard predictions.

All metrics are used as similarities (larger means closer): the squared
Euclidean metric enters as ``-||f - p||**2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import ConfigError, ShapeMismatch
from .numerics import argmax_last_axis, l2_normalize, l2_normalize_rows, softmax_last_axis
from .prototype import PrototypeSet


class MetricKind(str, Enum):
    FIDELITY = "fidelity"
    COSINE = "cosine"
    SQ_EUCLIDEAN = "sq_euclidean"


@dataclass(frozen=True)
class InferenceConfig:
    metric: MetricKind = MetricKind.FIDELITY
    alpha: float = 10.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "metric", MetricKind(self.metric))
        except ValueError:
            raise ConfigError(f"unknown metric {self.metric!r}") from None
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")


def similarity(metric, f, p) -> float:
    """Similarity of one feature vector to one prototype."""
    metric = MetricKind(metric)
    f = np.asarray(f, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if metric is MetricKind.SQ_EUCLIDEAN:
        d = f - p
        return -float(d @ d)
    fn, pn = l2_normalize(f), l2_normalize(p)
    if metric is MetricKind.COSINE:
        return float(fn @ pn)
    # fidelity through the density matrix of the prototype
    return float(fn @ np.outer(pn, pn) @ fn)


def pairwise_similarity(metric, feats, protos) -> np.ndarray:
    """``(N, D) x (J, D) -> (N, J)`` similarity matrix."""
    metric = MetricKind(metric)
    if metric is MetricKind.SQ_EUCLIDEAN:
        ff = np.einsum("nd,nd->n", feats, feats)
        pp = np.einsum("jd,jd->j", protos, protos)
        return -(ff[:, None] - 2.0 * feats @ protos.T + pp[None, :])
    fn, _ = l2_normalize_rows(feats)
    pn, _ = l2_normalize_rows(protos)
    cos = fn @ pn.T
    return cos if metric is MetricKind.COSINE else cos * cos


def pairwise_similarity_grad(metric, feats, protos, grad_s) -> tuple[np.ndarray, np.ndarray]:
    """Back-propagate ``dL/dS`` to ``(dL/dfeats, dL/dprotos)``.

    For the normalised metrics the gradient passes through the l2
    normalisation of both arguments: ``d(v/|v|) = (I - v̂ v̂ᵀ) / |v|``.
    """
    metric = MetricKind(metric)
    if metric is MetricKind.SQ_EUCLIDEAN:
        gf = -2.0 * (grad_s.sum(axis=1)[:, None] * feats - grad_s @ protos)
        gp = 2.0 * (grad_s.T @ feats - grad_s.sum(axis=0)[:, None] * protos)
        return gf, gp
    fn, fnorm = l2_normalize_rows(feats)
    pn, pnorm = l2_normalize_rows(protos)
    g_cos = grad_s if metric is MetricKind.COSINE else 2.0 * grad_s * (fn @ pn.T)
    g_fn = g_cos @ pn
    g_pn = g_cos.T @ fn
    gf = (g_fn - fn * np.einsum("nd,nd->n", fn, g_fn)[:, None]) / fnorm[:, None]
    gp = (g_pn - pn * np.einsum("jd,jd->j", pn, g_pn)[:, None]) / pnorm[:, None]
    return gf, gp


def _check_dims(features, protos: PrototypeSet) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ShapeMismatch(f"feature map must be H x W x D, got shape {features.shape}")
    if features.shape[-1] != protos.dim:
        raise ShapeMismatch(f"feature depth {features.shape[-1]} != prototype dim {protos.dim}")
    return features


def score_map(features, protos: PrototypeSet, cfg: InferenceConfig) -> np.ndarray:
    """``H x W x (C+1)`` class probabilities, background in channel 0.

    Serves both query and support images.
    """
    features = _check_dims(features, protos)
    h, w, d = features.shape
    sims = pairwise_similarity(cfg.metric, features.reshape(-1, d), protos.vectors)
    return softmax_last_axis(cfg.alpha * sims).reshape(h, w, -1)


def predict_mask(scores) -> np.ndarray:
    return argmax_last_axis(scores)


def predict(features, protos: PrototypeSet, cfg: InferenceConfig) -> np.ndarray:
    return predict_mask(score_map(features, protos, cfg))
