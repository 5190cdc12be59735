"""Ablation variants and the seeded episodic evaluation protocol."""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import EpisodicDataset, sample_episode
from .exceptions import ConfigError, DegenerateFusion, DivergenceWarning
from .inference import InferenceConfig, MetricKind, predict
from .iqi import IqiConfig, fused_prediction, refine_prototypes
from .metrics import Confusion, binary_iou, confusion, dice, mean_iou, mean_std
from .prototype import build_prototype_set
from .rng import Xoshiro256


@dataclass(frozen=True)
class Variant:
    name: str
    metric: MetricKind
    srp: bool
    iqi: bool


VARIANTS = {
    "cos": Variant("cos", MetricKind.COSINE, srp=False, iqi=False),
    "f": Variant("f", MetricKind.FIDELITY, srp=False, iqi=False),
    "f-srp": Variant("f-srp", MetricKind.FIDELITY, srp=True, iqi=False),
    "f-iqi": Variant("f-iqi", MetricKind.FIDELITY, srp=False, iqi=True),
    "f-srp-iqi": Variant("f-srp-iqi", MetricKind.FIDELITY, srp=True, iqi=True),
}

# variants sharing a training recipe share a checkpoint
TRAINING_KEY = {"cos": "cos", "f": "f", "f-iqi": "f", "f-srp": "f-srp", "f-srp-iqi": "f-srp"}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


@dataclass
class EpisodeSegmentation:
    query_predictions: list
    support_predictions: list
    trace: object = None


def segment_episode(support_features, support_masks, query_features, cfg_inf: InferenceConfig, cfg_iqi: IqiConfig | None = None) -> EpisodeSegmentation:
    """Predict query masks and restore support masks for one episode.

    ``support_features``/``support_masks`` are ``C`` lists of ``K`` entries.
    Query labels are deliberately not an argument.
    """
    protos = build_prototype_set(support_features, support_masks)
    flat_f = [f for shots in support_features for f in shots]
    flat_m = [m for shots in support_masks for m in shots]
    support_preds = [predict(f, protos, cfg_inf) for f in flat_f]
    trace = None
    if cfg_iqi is not None and cfg_iqi.n_prototypes > 1:
        trace = refine_prototypes(protos, flat_f, flat_m, cfg_inf, cfg_iqi)
        query_preds = [fused_prediction(q, trace, cfg_inf) for q in query_features]
    else:
        query_preds = [predict(q, protos, cfg_inf) for q in query_features]
    return EpisodeSegmentation(query_preds, support_preds, trace)


class FeatureCache:
    """Embeds dataset items on first use."""

    def __init__(self, dataset: EpisodicDataset, embed_fn):
        self.dataset = dataset
        self.embed_fn = embed_fn
        self._cache = {}

    def __getitem__(self, item: int) -> np.ndarray:
        if item not in self._cache:
            self._cache[item] = self.embed_fn(self.dataset.images[item])
        return self._cache[item]


@dataclass
class RunResult:
    seed: int
    episodes: int
    query_miou: float
    query_dice: float
    query_binary_iou: float
    support_miou: float
    degenerate_fusions: int = 0
    divergences: int = 0


def evaluate_run(features: FeatureCache, dataset: EpisodicDataset, cfg_inf: InferenceConfig, cfg_iqi: IqiConfig | None,
                 way: int, shot: int, n_query: int, episodes: int, seed: int, split: str = "unseen",
                 on_episode=None) -> RunResult:
    """Evaluate ``episodes`` sampled episodes; counts accumulate over the run."""
    if episodes < 1:
        raise ConfigError("episodes must be positive")
    rng = Xoshiro256(seed)
    q_conf, s_conf = Confusion(), Confusion()
    binary = []
    degenerate = diverged = 0
    for e in range(episodes):
        ep = sample_episode(dataset, split, way, shot, n_query, rng.next_u64())
        sup_f = [[features[i] for i in shots] for shots in ep.support_items]
        qry_f = [features[i] for i in ep.query_items]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateFusion)
            warnings.simplefilter("ignore", DivergenceWarning)
            seg = segment_episode(sup_f, ep.support_masks, qry_f, cfg_inf, cfg_iqi)
        if seg.trace is not None:
            degenerate += int(seg.trace.degenerate)
            diverged += int(bool(seg.trace.warnings))
        # ground truth enters only from here on
        for p, g in zip(seg.query_predictions, ep.query_masks):
            q_conf = q_conf + confusion(p, g, ep.way, ep.class_ids)
            binary.append(binary_iou(p, g))
        _, flat_m = ep.flat_support()
        for p, g in zip(seg.support_predictions, flat_m):
            s_conf = s_conf + confusion(p, g, ep.way, ep.class_ids)
        if on_episode is not None:
            on_episode(e, ep, seg)
    return RunResult(
        seed=seed,
        episodes=episodes,
        query_miou=mean_iou(q_conf),
        query_dice=dice(q_conf),
        query_binary_iou=float(np.mean(binary)),
        support_miou=mean_iou(s_conf),
        degenerate_fusions=degenerate,
        divergences=diverged,
    )


METRIC_FIELDS = ("query_miou", "query_dice", "query_binary_iou", "support_miou")


@dataclass
class VariantReport:
    variant: str
    split: str
    runs: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {}
        for name in METRIC_FIELDS:
            m, s = mean_std([getattr(r, name) for r in self.runs])
            out[name] = {"mean": m, "std": s}
        return out

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "split": self.split,
            "seeds": [r.seed for r in self.runs],
            "episodes": sum(r.episodes for r in self.runs),
            "summary": self.summary(),
            "runs": [asdict(r) for r in self.runs],
        }


@dataclass
class RunReport:
    variants: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def get(self, name: str) -> VariantReport:
        for v in self.variants:
            if v.variant == name:
                return v
        raise KeyError(name)

    def to_json(self) -> str:
        payload = {"config": self.config, "variants": [v.to_dict() for v in self.variants]}
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "split", "metric", "mean", "std", "runs", "episodes"])
        for v in self.variants:
            summary = v.summary()
            for name in METRIC_FIELDS:
                w.writerow([v.variant, v.split, name, repr(summary[name]["mean"]), repr(summary[name]["std"]),
                            len(v.runs), sum(r.episodes for r in v.runs)])
        return buf.getvalue()

    def table(self) -> str:
        """Ablation table: one query row per variant plus ``(sup)`` rows for f and f-srp."""
        lines = [f"{'variant':<14}{'mIoU':>16}{'Dice':>16}{'binary-IoU':>16}"]

        def fmt(s):
            return f"{100 * s['mean']:6.2f} +- {100 * s['std']:5.2f}"

        for v in self.variants:
            s = v.summary()
            lines.append(f"{v.variant:<14}{fmt(s['query_miou']):>16}{fmt(s['query_dice']):>16}{fmt(s['query_binary_iou']):>16}")
        for v in self.variants:
            if v.variant in ("f", "f-srp"):
                s = v.summary()
                lines.append(f"{v.variant + ' (sup)':<14}{fmt(s['support_miou']):>16}")
        return "\n".join(lines)
