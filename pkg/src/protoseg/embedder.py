"""A small two-level pyramid feature extractor with hand-written backprop.

Forward pass for an ``H x W x 3`` image ``x``::

    h1 = relu(x @ w1 + b1)                      # level 1, full resolution
    h2 = relu(avgpool2(h1) @ w2 + b2)           # level 2, half resolution
    f  = concat(h1, upsample(h2)) @ wp + bp     # 1x1 projection to D channels

Every learnable layer is pointwise; spatial context comes from the fixed
pooling branch. Gradients of the combined support/query loss reach the
parameters through pooling, prototype averaging, normalisation,
similarity and softmax.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import pseg
from .data import EpisodicDataset, Episode, sample_episode
from .exceptions import ConfigError, FormatError, ShapeMismatch
from .inference import InferenceConfig
from .loss import LossReport, LossWeights, image_loss, total_loss
from .numerics import avg_pool2, nearest_index, upsample_nearest
from .prototype import build_prototype_set, align_mask
from .rng import Xoshiro256

logger = logging.getLogger(__name__)

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wp", "bp")


@dataclass
class EmbedderParams:
    arrays: dict

    def __post_init__(self):
        missing = [n for n in PARAM_NAMES if n not in self.arrays]
        if missing:
            raise ShapeMismatch(f"missing parameters {missing}")
        a = {n: np.asarray(self.arrays[n], dtype=np.float64) for n in PARAM_NAMES}
        cin, hid = a["w1"].shape
        hid_in, hid2 = a["w2"].shape
        cat, dim = a["wp"].shape
        if a["b1"].shape != (hid,) or hid_in != hid or a["b2"].shape != (hid2,):
            raise ShapeMismatch("hidden layer shapes are inconsistent")
        if cat != hid + hid2 or a["bp"].shape != (dim,):
            raise ShapeMismatch("projection input width must equal the sum of level widths")
        self.arrays = a

    @property
    def in_channels(self) -> int:
        return self.arrays["w1"].shape[0]

    @property
    def dim(self) -> int:
        return self.arrays["wp"].shape[1]

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self) -> "EmbedderParams":
        return EmbedderParams({k: v.copy() for k, v in self.arrays.items()})

    def save(self, path) -> None:
        pseg.save_weights(self.arrays, path)

    @classmethod
    def load(cls, path) -> "EmbedderParams":
        arrays = pseg.load_weights(path)
        try:
            return cls(arrays)
        except ShapeMismatch as e:
            raise FormatError(f"checkpoint {path}: {e}") from e


def init_params(in_channels: int = 3, hidden: int = 16, pyramid_hidden: int = 16, dim: int = 32, seed: int = 0) -> EmbedderParams:
    """Uniform(-a, a) weights with ``a = sqrt(6 / (fan_in + fan_out))``; zero biases."""
    rng = Xoshiro256(seed)

    def glorot(fan_in, fan_out):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform_array((fan_in, fan_out), -a, a)

    return EmbedderParams(
        {
            "w1": glorot(in_channels, hidden),
            "b1": np.zeros(hidden),
            "w2": glorot(hidden, pyramid_hidden),
            "b2": np.zeros(pyramid_hidden),
            "wp": glorot(hidden + pyramid_hidden, dim),
            "bp": np.zeros(dim),
        }
    )


def _forward(params: EmbedderParams, image):
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[-1] != params.in_channels:
        raise ShapeMismatch(f"image shape {x.shape} does not match {params.in_channels} input channels")
    h, w, _ = x.shape
    z1 = x @ params["w1"] + params["b1"]
    h1 = np.maximum(z1, 0.0)
    pooled = avg_pool2(h1)
    z2 = pooled @ params["w2"] + params["b2"]
    h2 = np.maximum(z2, 0.0)
    up = upsample_nearest(h2, h, w)
    cat = np.concatenate([h1, up], axis=-1)
    f = cat @ params["wp"] + params["bp"]
    return f, (x, z1, h1, pooled, z2, cat)


def embed(params: EmbedderParams, image) -> np.ndarray:
    """Feature map ``H x W x D`` of one image."""
    return _forward(params, image)[0]


def _backward_image(params: EmbedderParams, cache, grad_f, grads: dict) -> None:
    x, z1, h1, pooled, z2, cat = cache
    h, w, _ = x.shape
    hid = h1.shape[-1]
    gf = grad_f.reshape(-1, grad_f.shape[-1])
    grads["wp"] += cat.reshape(-1, cat.shape[-1]).T @ gf
    grads["bp"] += gf.sum(axis=0)
    g_cat = (gf @ params["wp"].T).reshape(h, w, -1)
    g_h1 = g_cat[..., :hid].copy()
    g_up = g_cat[..., hid:]

    # nearest upsampling scatters back onto the source pixels it copied
    ph, pw = z2.shape[:2]
    rows, cols = nearest_index(ph, h), nearest_index(pw, w)
    g_h2 = np.zeros_like(z2)
    np.add.at(g_h2, (rows[:, None], cols[None, :]), g_up)
    g_z2 = g_h2 * (z2 > 0)
    grads["w2"] += pooled.reshape(-1, pooled.shape[-1]).T @ g_z2.reshape(-1, g_z2.shape[-1])
    grads["b2"] += g_z2.sum(axis=(0, 1))
    g_pooled = g_z2 @ params["w2"].T
    g_h1[: 2 * ph, : 2 * pw] += np.repeat(np.repeat(g_pooled / 4.0, 2, axis=0), 2, axis=1)

    g_z1 = g_h1 * (z1 > 0)
    grads["w1"] += x.reshape(-1, x.shape[-1]).T @ g_z1.reshape(-1, g_z1.shape[-1])
    grads["b1"] += g_z1.sum(axis=(0, 1))


def _pooling_backward(grad_protos, support_features, support_masks, grad_feats) -> None:
    """Route prototype gradients back to the support pixels that were averaged."""
    way = len(support_features)
    for c in range(1, way + 1):
        shots = [(k, align_mask(m, f) == c) for k, (f, m) in enumerate(zip(support_features[c - 1], support_masks[c - 1]))]
        shots = [(k, sel) for k, sel in shots if sel.any()]
        for k, sel in shots:
            grad_feats[c - 1][k][sel] += grad_protos[c] / (len(shots) * sel.sum())
    bg = []
    for c in range(way):
        for k, (f, m) in enumerate(zip(support_features[c], support_masks[c])):
            sel = align_mask(m, f) == 0
            if sel.any():
                bg.append((c, k, sel))
    for c, k, sel in bg:
        grad_feats[c][k][sel] += grad_protos[0] / (len(bg) * sel.sum())


def episode_loss(params: EmbedderParams, episode: Episode, cfg_inf: InferenceConfig, weights: LossWeights) -> LossReport:
    return backward(params, episode, cfg_inf, weights, need_grads=False)[1]


def backward(params: EmbedderParams, episode: Episode, cfg_inf: InferenceConfig, weights: LossWeights, need_grads: bool = True):
    """Gradients of ``w_s * L_sup + w_q * L_que`` for every embedder parameter.

    Returns ``(grads, report)``; ``grads`` is a dict keyed like the params.
    """
    sup = [[_forward(params, im) for im in shots] for shots in episode.support_images]
    qry = [_forward(params, im) for im in episode.query_images]
    sup_f = [[f for f, _ in shots] for shots in sup]
    protos = build_prototype_set(sup_f, episode.support_masks)

    g_protos = np.zeros_like(protos.vectors)
    g_sup = [[np.zeros_like(f) for f in shots] for shots in sup_f]
    n_sup = sum(len(s) for s in sup_f)
    l_sup = 0.0
    for c, shots in enumerate(sup_f):
        for k, f in enumerate(shots):
            loss, gf, gp = image_loss(f, episode.support_masks[c][k], protos, cfg_inf, need_grads)
            l_sup += loss / n_sup
            if need_grads:
                g_sup[c][k] += (weights.w_s / n_sup) * gf
                g_protos += (weights.w_s / n_sup) * gp

    l_que = 0.0
    g_qry = []
    for (f, _), m in zip(qry, episode.query_masks):
        loss, gf, gp = image_loss(f, m, protos, cfg_inf, need_grads)
        l_que += loss / len(qry)
        if need_grads:
            g_qry.append((weights.w_q / len(qry)) * gf)
            g_protos += (weights.w_q / len(qry)) * gp

    report = LossReport(
        l_que=l_que,
        l_sup=l_sup,
        total=total_loss(l_sup, l_que, weights),
        pixel_count=int(np.prod(qry[0][0].shape[:2])),
    )
    if not need_grads:
        return None, report

    _pooling_backward(g_protos, sup_f, episode.support_masks, g_sup)
    grads = {n: np.zeros_like(params[n]) for n in PARAM_NAMES}
    for c, shots in enumerate(sup):
        for k, (_, cache) in enumerate(shots):
            _backward_image(params, cache, g_sup[c][k], grads)
    for (_, cache), g in zip(qry, g_qry):
        _backward_image(params, cache, g, grads)
    return grads, report


@dataclass
class TrainConfig:
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_decay: float = 0.1
    milestones: tuple | None = None
    iterations: int = 300
    w_s: float = 1.0
    w_q: float = 1.0
    way: int = 1
    shot: int = 1
    n_query: int = 1
    hidden: int = 16
    pyramid_hidden: int = 16
    dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")

    def lr_at(self, iteration: int) -> float:
        """Step schedule; by default decays at one and two thirds of the run."""
        milestones = self.milestones
        if milestones is None:
            milestones = (self.iterations // 3, 2 * self.iterations // 3) if self.iterations >= 3 else ()
        return self.lr * self.lr_decay ** sum(1 for m in milestones if iteration >= m)


@dataclass
class SgdState:
    velocity: dict = field(default_factory=dict)


def sgd_step(params: EmbedderParams, grads: dict, state: SgdState, cfg: TrainConfig, lr: float | None = None):
    """Momentum SGD with weight decay folded into the velocity.

    ``v <- m*v + g + wd*theta``; ``theta <- theta - lr*v``.
    """
    lr = cfg.lr if lr is None else lr
    new_arrays, new_vel = {}, {}
    for n in PARAM_NAMES:
        theta = params[n]
        if grads[n].shape != theta.shape:
            raise ShapeMismatch(f"gradient for {n} has shape {grads[n].shape}, expected {theta.shape}")
        v = state.velocity.get(n, np.zeros_like(theta))
        v = cfg.momentum * v + grads[n] + cfg.weight_decay * theta
        new_vel[n] = v
        new_arrays[n] = theta - lr * v
    return EmbedderParams(new_arrays), SgdState(new_vel)


def train(dataset: EpisodicDataset, cfg: TrainConfig, cfg_inf: InferenceConfig, params: EmbedderParams | None = None):
    """Episodic training on the seen split, one episode per iteration.

    Returns ``(params, log)`` where ``log`` holds one :class:`LossReport`
    per iteration.
    """
    weights = LossWeights(cfg.w_s, cfg.w_q)
    rng = Xoshiro256(cfg.seed)
    init_seed = rng.next_u64()
    if params is None:
        in_ch = np.shape(dataset.images[0])[-1]
        params = init_params(in_ch, cfg.hidden, cfg.pyramid_hidden, cfg.dim, seed=init_seed)
    state = SgdState()
    log = []
    for it in range(cfg.iterations):
        episode = sample_episode(dataset, "seen", cfg.way, cfg.shot, cfg.n_query, rng.next_u64())
        grads, report = backward(params, episode, cfg_inf, weights)
        params, state = sgd_step(params, grads, state, cfg, lr=cfg.lr_at(it))
        log.append(report)
        if it % 50 == 0:
            logger.info("iter %d  total %.4f  sup %.4f  que %.4f", it, report.total, report.l_sup, report.l_que)
    return params, log
