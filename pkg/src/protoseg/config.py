"""Run configuration: a JSON document with one section per concern.

Example::

    {
      "variant": "f-srp-iqi",
      "paths": {"dataset": "data", "checkpoints": "checkpoints", "reports": "reports"},
      "episode": {"way": 1, "shot": 1, "n_query": 1},
      "inference": {"alpha": 10.0, "metric": null},
      "iqi": {"eta": 0.05, "n_prototypes": 5},
      "loss": {"w_s": 1.0, "w_q": 1.0},
      "train": {"lr": 0.001, "momentum": 0.9, "iterations": 300, "seed": 0, ...},
      "eval": {"seeds": [0, 1, 2, 3, 4], "episodes": 200, "split": "unseen"},
      "synthetic": {"height": 48, "width": 48, "seed": 0, ...}
    }

Missing keys take defaults; unknown keys are rejected.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import SyntheticConfig
from .exceptions import ConfigError
from .inference import MetricKind
from .protocol import TRAINING_KEY, get_variant


@dataclass
class Paths:
    dataset: str = "data"
    checkpoints: str = "checkpoints"
    reports: str = "reports"


@dataclass
class EpisodeShape:
    way: int = 1
    shot: int = 1
    n_query: int = 1


@dataclass
class InferenceSection:
    alpha: float = 10.0
    metric: str | None = None


@dataclass
class IqiSection:
    eta: float = 0.05
    n_prototypes: int = 5


@dataclass
class LossSection:
    w_s: float = 1.0
    w_q: float = 1.0


@dataclass
class TrainSection:
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_decay: float = 0.1
    milestones: list | None = None
    iterations: int = 300
    hidden: int = 16
    pyramid_hidden: int = 16
    dim: int = 32
    seed: int = 0


@dataclass
class EvalSection:
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    episodes: int = 200
    split: str = "unseen"


SECTIONS = {
    "paths": Paths,
    "episode": EpisodeShape,
    "inference": InferenceSection,
    "iqi": IqiSection,
    "loss": LossSection,
    "train": TrainSection,
    "eval": EvalSection,
    "synthetic": SyntheticConfig,
}


@dataclass
class RunConfig:
    variant: str = "f-srp-iqi"
    paths: Paths = field(default_factory=Paths)
    episode: EpisodeShape = field(default_factory=EpisodeShape)
    inference: InferenceSection = field(default_factory=InferenceSection)
    iqi: IqiSection = field(default_factory=IqiSection)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - set(SECTIONS) - {"variant"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs = {}
        for name, section in SECTIONS.items():
            values = raw.get(name, {}) or {}
            allowed = {f.name for f in fields(section)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown keys {sorted(bad)} in section {name!r}")
            kwargs[name] = section(**values)
        cfg = cls(variant=raw.get("variant", cls.variant), **kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        get_variant(self.variant)
        if self.inference.metric is not None:
            try:
                MetricKind(self.inference.metric)
            except ValueError:
                raise ConfigError(f"unknown metric {self.inference.metric!r}") from None
        if self.eval.episodes < 1 or not self.eval.seeds:
            raise ConfigError("evaluation needs at least one seed and one episode")

    def with_variant(self, name: str) -> "RunConfig":
        get_variant(name)
        return replace(self, variant=name)

    def segmenter_params(self) -> dict:
        """Estimator keyword arguments implied by the variant and the sections."""
        v = get_variant(self.variant)
        metric = self.inference.metric or v.metric.value
        return dict(
            metric=metric,
            alpha=self.inference.alpha,
            w_s=self.loss.w_s if v.srp else 0.0,
            w_q=self.loss.w_q,
            n_prototypes=self.iqi.n_prototypes if v.iqi else 1,
            eta=self.iqi.eta,
            hidden=self.train.hidden,
            pyramid_hidden=self.train.pyramid_hidden,
            dim=self.train.dim,
            lr=self.train.lr,
            momentum=self.train.momentum,
            weight_decay=self.train.weight_decay,
            lr_decay=self.train.lr_decay,
            milestones=self.train.milestones,
            n_iter=self.train.iterations,
            way=self.episode.way,
            shot=self.episode.shot,
            n_query=self.episode.n_query,
            random_state=self.train.seed,
        )

    def checkpoint_path(self) -> Path:
        return Path(self.paths.checkpoints) / f"{TRAINING_KEY[self.variant]}.pseg"
