"""scikit-learn style front end for few-shot prototype segmentation."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import EpisodicDataset, Episode
from .embedder import EmbedderParams, TrainConfig, embed, init_params, train
from .exceptions import ConfigError, DataError
from .inference import InferenceConfig
from .iqi import IqiConfig
from .metrics import confusion, mean_iou
from .rng import Xoshiro256
from .protocol import FeatureCache, RunReport, VariantReport, evaluate_run, get_variant, segment_episode
from .validation import check_image, check_images_masks, check_mask


class PrototypeSegmenter(BaseEstimator):
    """Few-shot segmenter: a trainable embedder plus prototype inference.

    ``fit`` trains the embedder episodically on the classes present in the
    training masks. ``transform`` maps images to feature maps. ``predict``
    segments query images given a labelled support set whose masks use
    episode-local labels ``1..C``.

    Parameters mirror :class:`~protoseg.embedder.TrainConfig`,
    :class:`~protoseg.inference.InferenceConfig` and
    :class:`~protoseg.iqi.IqiConfig`; ``n_prototypes=1`` disables iterative
    refinement and ``w_s=0`` disables support-loss regularisation.
    """

    def __init__(self, metric="fidelity", alpha=10.0, w_s=1.0, w_q=1.0, n_prototypes=1, eta=0.05,
                 hidden=16, pyramid_hidden=16, dim=32, lr=0.001, momentum=0.9, weight_decay=0.0005,
                 lr_decay=0.1, milestones=None, n_iter=300, way=1, shot=1, n_query=1, random_state=0):
        self.metric = metric
        self.alpha = alpha
        self.w_s = w_s
        self.w_q = w_q
        self.n_prototypes = n_prototypes
        self.eta = eta
        self.hidden = hidden
        self.pyramid_hidden = pyramid_hidden
        self.dim = dim
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_decay = lr_decay
        self.milestones = milestones
        self.n_iter = n_iter
        self.way = way
        self.shot = shot
        self.n_query = n_query
        self.random_state = random_state

    @classmethod
    def from_variant(cls, name: str, n_prototypes: int = 5, w_s: float = 1.0, **kwargs) -> "PrototypeSegmenter":
        """Estimator configured as one of ``cos, f, f-srp, f-iqi, f-srp-iqi``."""
        v = get_variant(name)
        return cls(metric=v.metric.value, w_s=w_s if v.srp else 0.0,
                   n_prototypes=n_prototypes if v.iqi else 1, **kwargs)

    def inference_config(self) -> InferenceConfig:
        return InferenceConfig(self.metric, self.alpha)

    def iqi_config(self) -> IqiConfig:
        return IqiConfig(self.eta, self.n_prototypes)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, momentum=self.momentum, weight_decay=self.weight_decay, lr_decay=self.lr_decay,
            milestones=None if self.milestones is None else tuple(self.milestones), iterations=self.n_iter,
            w_s=self.w_s, w_q=self.w_q, way=self.way, shot=self.shot, n_query=self.n_query,
            hidden=self.hidden, pyramid_hidden=self.pyramid_hidden, dim=self.dim, seed=self.random_state,
        )

    def fit(self, X, y=None, classes=None):
        """Train on ``X`` (images or an :class:`EpisodicDataset`) and masks ``y``.

        ``classes`` restricts the training classes; labels of other classes
        are treated as background inside each episode.
        """
        if isinstance(X, EpisodicDataset):
            dataset = X
        else:
            if y is None:
                raise ConfigError("masks are required when fitting on raw images")
            images, masks = check_images_masks(X, y)
            present = sorted({int(v) for m in masks for v in np.unique(m) if v != 0})
            seen = sorted(classes) if classes is not None else present
            if not seen:
                raise DataError("training masks contain no foreground class")
            dataset = EpisodicDataset(images, masks, seen, [])
        self.params_, log = train(dataset, self.train_config(), self.inference_config())
        self.training_log_ = log
        self.n_features_in_ = self.params_.in_channels
        return self

    def set_embedder(self, params: EmbedderParams) -> "PrototypeSegmenter":
        """Use given embedder weights, e.g. from a checkpoint, without training."""
        self.params_ = params
        self.training_log_ = []
        self.n_features_in_ = params.in_channels
        return self

    def initialize(self, in_channels: int = 3) -> "PrototypeSegmenter":
        cfg = self.train_config()
        # same seed derivation as train(), so 0 iterations equals this init
        seed = Xoshiro256(cfg.seed).next_u64()
        return self.set_embedder(init_params(in_channels, cfg.hidden, cfg.pyramid_hidden, cfg.dim, seed=seed))

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return np.stack([embed(self.params_, check_image(x, self.n_features_in_)) for x in X])

    def _group_support(self, support_features, support_masks, support_classes):
        masks = [check_mask(m, f.shape[:2]) for f, m in zip(support_features, support_masks)]
        if support_classes is None:
            support_classes = []
            for m in masks:
                labels, counts = np.unique(m[m > 0], return_counts=True)
                if labels.size == 0:
                    raise DataError("a support mask has no foreground; pass support_classes")
                support_classes.append(int(labels[np.argmax(counts)]))
        way = max(support_classes)
        groups_f = [[] for _ in range(way)]
        groups_m = [[] for _ in range(way)]
        for f, m, c in zip(support_features, masks, support_classes):
            groups_f[c - 1].append(f)
            groups_m[c - 1].append(m)
        if any(not g for g in groups_f):
            raise DataError("every class 1..C needs at least one support image")
        return groups_f, groups_m

    def segment(self, X, support_images, support_masks, support_classes=None):
        check_is_fitted(self, "params_")
        sup_f = list(self.transform(support_images))
        gf, gm = self._group_support(sup_f, support_masks, support_classes)
        qry_f = list(self.transform(X))
        return segment_episode(gf, gm, qry_f, self.inference_config(), self._iqi_or_none())

    def predict(self, X, support_images, support_masks, support_classes=None) -> np.ndarray:
        """Segment query images ``X`` against a labelled support set.

        ``support_classes[i]`` is the episode class the i-th support image
        was chosen for; by default the mask's largest foreground label.
        """
        seg = self.segment(X, support_images, support_masks, support_classes)
        return np.stack(seg.query_predictions)

    def predict_support(self, support_images, support_masks, support_classes=None) -> np.ndarray:
        """Support masks restored from the support set's own prototypes."""
        seg = self.segment(support_images[:1], support_images, support_masks, support_classes)
        return np.stack(seg.support_predictions)

    def predict_episode(self, episode: Episode):
        check_is_fitted(self, "params_")
        sup_f = [[embed(self.params_, im) for im in shots] for shots in episode.support_images]
        qry_f = [embed(self.params_, im) for im in episode.query_images]
        return segment_episode(sup_f, episode.support_masks, qry_f, self.inference_config(), self._iqi_or_none())

    def score(self, episodes) -> float:
        """Query mean-IoU over ``episodes`` with counts pooled across them."""
        confs = []
        for ep in episodes:
            seg = self.predict_episode(ep)
            confs += [confusion(p, g, ep.way, ep.class_ids) for p, g in zip(seg.query_predictions, ep.query_masks)]
        return mean_iou(confs)

    def evaluate(self, dataset: EpisodicDataset, seeds=(0, 1, 2, 3, 4), episodes: int = 200,
                 split: str = "unseen", name: str = "model", on_episode=None) -> VariantReport:
        """Seeded multi-run evaluation; one :class:`RunResult` per seed."""
        check_is_fitted(self, "params_")
        cache = FeatureCache(dataset, lambda im: embed(self.params_, im))
        report = VariantReport(name, split)
        for s in seeds:
            report.runs.append(evaluate_run(cache, dataset, self.inference_config(), self._iqi_or_none(),
                                            self.way, self.shot, self.n_query, episodes, s, split, on_episode))
        return report

    def _iqi_or_none(self):
        return self.iqi_config() if self.n_prototypes > 1 else None


__all__ = ["PrototypeSegmenter", "RunReport"]
