"""Episodic datasets: synthetic shape generator, manifest I/O and episode sampling.

The generator paints 1-3 shapes per image on a striped, tinted background.
A class fixes both the shape outline and the mean colour, so a class is
recognisable from colour and from local structure. Shapes are painted in
order and the last one wins, both in the raster and in the mask.
"""
from __future__ import annotations

import colorsys
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import pseg
from .exceptions import ConfigError, DataError, InsufficientClasses, InsufficientImages, IoError
from .numerics import nearest_index
from .rng import Xoshiro256

SHAPE_KINDS = ("square", "triangle", "disk", "diamond", "cross", "ring")


def shape_kind(class_id: int) -> str:
    return SHAPE_KINDS[(class_id - 1) % len(SHAPE_KINDS)]


def shape_region(kind: str, cy: float, cx: float, r: float, height: int, width: int) -> np.ndarray:
    """Boolean mask of pixels whose centres fall inside the shape."""
    dy = (np.arange(height) + 0.5)[:, None] - cy
    dx = (np.arange(width) + 0.5)[None, :] - cx
    ady, adx = np.abs(dy), np.abs(dx)
    if kind == "disk":
        return dy * dy + dx * dx <= r * r
    if kind == "square":
        return (ady <= r) & (adx <= r)
    if kind == "triangle":
        return (dy >= -r) & (dy <= r) & (adx <= (dy + r) / 2)
    if kind == "diamond":
        return ady + adx <= r
    if kind == "cross":
        t = r / 3
        return ((ady <= t) & (adx <= r)) | ((adx <= t) & (ady <= r))
    if kind == "ring":
        d2 = dy * dy + dx * dx
        return (d2 <= r * r) & (d2 >= 0.25 * r * r)
    raise ValueError(f"unknown shape kind {kind!r}")


def default_palette(n_classes: int) -> list[list[float]]:
    return [list(colorsys.hsv_to_rgb(k / n_classes, 0.75, 0.85)) for k in range(n_classes)]


@dataclass
class SyntheticConfig:
    height: int = 48
    width: int = 48
    n_classes: int = 6
    n_unseen: int = 2
    images_per_class: int = 30
    min_shapes: int = 1
    max_shapes: int = 3
    noise_std: float = 0.05
    color_jitter: float = 0.06
    texture_amplitude: float = 0.08
    palette: list | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.height < 16 or self.width < 16:
            raise ConfigError("image size must be at least 16x16")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if not 0 < self.n_unseen < self.n_classes:
            raise ConfigError("n_unseen must leave at least one class on each side")
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ConfigError("invalid shapes-per-image range")
        if self.images_per_class < 1:
            raise ConfigError("images_per_class must be positive")
        if self.palette is not None and len(self.palette) != self.n_classes:
            raise ConfigError("palette needs one colour per class")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")


def render_item(cfg: SyntheticConfig, primary: int, rng: Xoshiro256, palette) -> tuple[np.ndarray, np.ndarray, list]:
    h, w = cfg.height, cfg.width
    n_shapes = cfg.min_shapes + rng.integers(cfg.max_shapes - cfg.min_shapes + 1)
    classes = [1 + rng.integers(cfg.n_classes) for _ in range(n_shapes - 1)] + [primary]

    base = np.array([0.3 + 0.3 * rng.random() for _ in range(3)])
    period = rng.uniform(4.0, 12.0)
    angle = rng.uniform(0.0, np.pi)
    phase = rng.uniform(0.0, 2 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    stripes = np.sin(2 * np.pi * (yy * np.sin(angle) + xx * np.cos(angle)) / period + phase)
    image = base[None, None, :] + cfg.texture_amplitude * stripes[:, :, None]
    mask = np.zeros((h, w), dtype=np.int64)

    shapes = []
    lo_r, hi_r = 0.12 * min(h, w), 0.25 * min(h, w)
    for c in classes:
        r = rng.uniform(lo_r, hi_r)
        cy = rng.uniform(r, h - r)
        cx = rng.uniform(r, w - r)
        color = np.array(palette[c - 1]) + np.array([rng.normal(0.0, cfg.color_jitter) for _ in range(3)])
        kind = shape_kind(c)
        region = shape_region(kind, cy, cx, r, h, w)
        image[region] = color
        mask[region] = c
        shapes.append({"class": c, "kind": kind, "cy": cy, "cx": cx, "r": r})

    if cfg.noise_std > 0:
        image = image + rng.normal_array((h, w, 3), cfg.noise_std)
    return np.clip(image, 0.0, 1.0), mask, shapes


def generate_synthetic_dataset(cfg: SyntheticConfig, out_dir) -> dict:
    """Write images, masks and ``manifest.json`` under ``out_dir``.

    Identical configs produce byte-identical output trees.
    """
    cfg.validate()
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create dataset directory {out}: {e}") from e

    palette = cfg.palette or default_palette(cfg.n_classes)
    n_seen = cfg.n_classes - cfg.n_unseen
    seen = list(range(1, n_seen + 1))
    unseen = list(range(n_seen + 1, cfg.n_classes + 1))
    rng = Xoshiro256(cfg.seed)

    items = []
    for c in range(1, cfg.n_classes + 1):
        for i in range(cfg.images_per_class):
            image, mask, shapes = render_item(cfg, c, rng, palette)
            stem = f"c{c:02d}_{i:04d}"
            pseg.save_feature_map(image, out / "images" / f"{stem}.pseg")
            pseg.save_mask(mask, out / "masks" / f"{stem}.pseg")
            items.append(
                {
                    "image": f"images/{stem}.pseg",
                    "mask": f"masks/{stem}.pseg",
                    "classes_present": sorted(int(v) for v in np.unique(mask) if v != 0),
                    "split": "seen" if c in seen else "unseen",
                    "shapes": shapes,
                }
            )

    manifest = {
        "classes": [{"id": c, "name": f"{shape_kind(c)}_{c}"} for c in range(1, cfg.n_classes + 1)],
        "seen": seen,
        "unseen": unseen,
        "items": items,
        "config": asdict(cfg),
    }
    write_manifest(manifest, out / "manifest.json")
    return manifest


def write_manifest(manifest: dict, path) -> None:
    try:
        Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except OSError as e:
        raise IoError(f"cannot write manifest {path}: {e}") from e


def read_manifest(path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text())
    except OSError as e:
        raise IoError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"manifest {path} is not valid JSON: {e}") from e
    for key in ("classes", "seen", "unseen", "items"):
        if key not in manifest:
            raise DataError(f"manifest {path} lacks {key!r}")
    if set(manifest["seen"]) & set(manifest["unseen"]):
        raise DataError("seen and unseen class sets overlap")
    return manifest


def tree_digest(root) -> str:
    """SHA-256 over every file under ``root`` (relative path + contents)."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(root)).encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


@dataclass
class EpisodicDataset:
    """Images and global-label masks held in memory, with the class split."""

    images: list
    masks: list
    seen: list
    unseen: list
    classes_present: list = field(default_factory=list)
    splits: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.images) != len(self.masks):
            raise DataError("images and masks differ in count")
        if set(self.seen) & set(self.unseen):
            raise DataError("seen and unseen class sets overlap")
        if not self.classes_present:
            self.classes_present = [sorted(int(v) for v in np.unique(m) if v != 0) for m in self.masks]
        if not self.splits:
            self.splits = [None] * len(self.images)

    @classmethod
    def from_manifest(cls, path) -> "EpisodicDataset":
        path = Path(path)
        manifest = read_manifest(path)
        root = path.parent
        images, masks, present, splits = [], [], [], []
        for item in manifest["items"]:
            images.append(pseg.load_feature_map(root / item["image"]))
            masks.append(pseg.load_mask(root / item["mask"]))
            present.append(list(item["classes_present"]))
            splits.append(item.get("split"))
        return cls(images, masks, list(manifest["seen"]), list(manifest["unseen"]), present, splits)

    def classes(self, split: str) -> list:
        if split == "seen":
            return list(self.seen)
        if split == "unseen":
            return list(self.unseen)
        raise ConfigError(f"unknown split {split!r}")

    def candidates(self, split: str, class_id: int) -> list:
        """Item indices of the split whose masks contain ``class_id``."""
        return [
            i
            for i, (present, s) in enumerate(zip(self.classes_present, self.splits))
            if class_id in present and (s is None or s == split)
        ]


@dataclass
class Episode:
    """A C-way K-shot task with episode-local labels (0 = background, 1..C)."""

    class_ids: list
    support_images: list
    support_masks: list
    query_images: list
    query_masks: list
    support_items: list = field(default_factory=list)
    query_items: list = field(default_factory=list)

    @property
    def way(self) -> int:
        return len(self.class_ids)

    @property
    def shot(self) -> int:
        return len(self.support_images[0])

    def flat_support(self) -> tuple[list, list]:
        images = [im for shots in self.support_images for im in shots]
        masks = [m for shots in self.support_masks for m in shots]
        return images, masks


def remap_labels(mask, class_ids) -> np.ndarray:
    """Global labels to episode-local ones; classes outside the episode become 0."""
    mask = np.asarray(mask)
    lut = np.zeros(int(max(mask.max(initial=0), max(class_ids, default=0))) + 1, dtype=np.int64)
    for local, g in enumerate(class_ids, start=1):
        lut[g] = local
    return lut[mask]


def sample_episode(dataset: EpisodicDataset, split: str, way: int, shot: int, n_query: int, seed: int) -> Episode:
    """Sample one episode.

    Classes are drawn without replacement from the split. Then, class by class,
    ``shot`` support images are drawn among unused images containing that class.
    Query ``q`` is drawn the same way for class ``q mod way``. No image is used
    twice within an episode.
    """
    if way < 1 or shot < 1 or n_query < 1:
        raise ConfigError("way, shot and n_query must be positive")
    pool = dataset.classes(split)
    if len(pool) < way:
        raise InsufficientClasses(f"split {split!r} has {len(pool)} classes, episode needs {way}")
    rng = Xoshiro256(seed)
    class_ids = rng.sample(pool, way)
    used: set = set()

    def draw(c: int, n: int) -> list:
        cands = [i for i in dataset.candidates(split, c) if i not in used]
        if len(cands) < n:
            raise InsufficientImages(f"class {c} has {len(cands)} unused images in {split!r}, need {n}")
        picked = rng.sample(cands, n)
        used.update(picked)
        return picked

    support_items = [draw(c, shot) for c in class_ids]
    query_items = [draw(class_ids[q % way], 1)[0] for q in range(n_query)]

    return Episode(
        class_ids=list(class_ids),
        support_images=[[dataset.images[i] for i in shots] for shots in support_items],
        support_masks=[[remap_labels(dataset.masks[i], class_ids) for i in shots] for shots in support_items],
        query_images=[dataset.images[i] for i in query_items],
        query_masks=[remap_labels(dataset.masks[i], class_ids) for i in query_items],
        support_items=support_items,
        query_items=query_items,
    )


def resize_mask_nearest(m, new_h: int, new_w: int) -> np.ndarray:
    m = np.asarray(m)
    h, w = m.shape
    return m[nearest_index(h, new_h)][:, nearest_index(w, new_w)]
