"""Seeded synthetic detector world.

The simulator stands in for a real detector so the self-training loop's
dynamics can be exercised at desk scale. A hidden, fully annotated world is
generated once; the visible training set is a sparse k-shot view of it. The
simulated detector's skill is a per-class scalar in [0, 1] -- how much of
the hidden truth its training annotations cover, discounted for label noise
-- which drives four effect channels: recall, localization noise,
confidence, and false-positive rate.

Generative model, per requested image (RNG stream keyed by
(seed, round, image_id), PCG64 via numpy SeedSequence):

* each hidden box of class c is emitted with probability
  p(c) = p_min + (p_max - p_min) * cov[c];
* an emitted box draws a difficulty u ~ U(0,1); every coordinate is
  jittered by zero-mean Gaussian noise whose std is
  sigma_max * (1 - beta * cov[c]) * 2u times the corresponding box
  dimension (2u has mean one, so the configured sigma is the mean jitter
  scale), then clipped to image bounds with minimum size 1;
* its confidence is Beta(1 + conf_tp_alpha * (1 - u * (1 - cov[c])), 2),
  so confidence is informative about localization quality even before any
  adaptation, and its mean rises with coverage;
* the image gains Poisson(lambda_fp_max * (1 - mean cov) +
  lambda_fp_min * mean cov) false positives with uniform geometry and
  class, confidence Beta(1, 3).

All numeric defaults are synthetic design choices, not values from any
benchmark. The model captures the recovered-supervision mechanism (missing
instances become training signal) and its noise costs; it does not model
loss-level effects inside a real detector, such as correct predictions of
unlabeled objects being penalized as false positives during fine-tuning.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .box_ops import Detection, PredictionSet, iou_matrix
from .coco import (
    AnnotationRecord,
    BBox,
    CategoryRecord,
    Dataset,
    ImageRecord,
    load_dataset,
    sample_support,
    save_dataset,
)
from .errors import InvalidConfigError, UnresolvableReferenceError

__all__ = [
    "SimulatorConfig",
    "World",
    "coverage",
    "load_world",
    "make_world",
    "save_world",
    "simulate_predictions",
    "supervision_quality",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF

# Label-noise discount applied by supervision_quality: full effect once
# training-annotation precision drops below the knee.
QUALITY_PRECISION_KNEE = 0.45
QUALITY_PRECISION_EXPONENT = 2.5

_IMAGE_W = 640
_IMAGE_H = 480
_BOX_MIN = 30.0
_BOX_MAX = 120.0
_MAX_SAME_CLASS_IOU = 0.3


@dataclass(frozen=True)
class SimulatorConfig:
    p_min: float = 0.45
    p_max: float = 0.95
    sigma_max: float = 0.25
    beta: float = 0.8
    lambda_fp_max: float = 3.0
    lambda_fp_min: float = 0.3
    conf_tp_alpha: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_min <= self.p_max <= 1.0:
            raise InvalidConfigError("need 0 <= p_min <= p_max <= 1")
        if self.sigma_max < 0:
            raise InvalidConfigError("sigma_max must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidConfigError("beta must be in [0, 1]")
        if self.lambda_fp_min > self.lambda_fp_max:
            raise InvalidConfigError("need lambda_fp_min <= lambda_fp_max")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SimulatorConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfigError(f"unknown simulator keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class World:
    """Hidden complete truth plus its sparse visible view.

    ``hidden_gt`` holds the complete annotations of the train split;
    ``visible_train`` is the k-shot subset over the same images;
    ``query_gt`` holds the complete annotations of the held-out split.
    The two splits share categories and have disjoint image ids.
    """

    hidden_gt: Dataset
    visible_train: Dataset
    query_gt: Dataset

    def train_image_ids(self) -> list[int]:
        return sorted(img.id for img in self.hidden_gt.images)

    def query_image_ids(self) -> list[int]:
        return sorted(img.id for img in self.query_gt.images)

    def image_record(self, image_id: int) -> ImageRecord:
        for img in self.hidden_gt.images + self.query_gt.images:
            if img.id == image_id:
                return img
        raise UnresolvableReferenceError(f"image {image_id} is not in this world")

    def complete_annotations(self, image_id: int) -> list[AnnotationRecord]:
        """Hidden truth for one image, train or query split."""
        pool = (self.hidden_gt if image_id in self.hidden_gt.image_ids()
                else self.query_gt)
        return sorted((a for a in pool.annotations if a.image_id == image_id),
                      key=lambda a: a.id)

    def category_ids(self) -> list[int]:
        return sorted(c.id for c in self.hidden_gt.categories)


def make_world(n_images: int, n_classes: int,
               instances_per_image: tuple[int, int], k_shot: int,
               seed: int) -> World:
    """Generate a random world: scenes, 50/50 train/query split, k-shot view.

    Scenes are non-degenerate by construction: boxes lie within image
    bounds and same-class pairs overlap at IoU <= 0.3, so NMS and greedy
    evaluation behave cleanly. Fully deterministic per seed.
    """
    lo, hi = instances_per_image
    if n_images < 2 or n_classes < 1 or lo < 1 or hi < lo or k_shot < 1:
        raise InvalidConfigError("world parameters must be positive and ordered")

    rng = np.random.default_rng(np.random.SeedSequence([seed & _MASK64, 0]))
    categories = tuple(CategoryRecord(id=c + 1, name=f"class_{c + 1:02d}")
                       for c in range(n_classes))

    images = []
    annotations = []
    next_ann = 1
    for n in range(n_images):
        image_id = n + 1
        images.append(ImageRecord(id=image_id,
                                  file_name=f"synthetic_{image_id:04d}.jpg",
                                  width=_IMAGE_W, height=_IMAGE_H))
        target = int(rng.integers(lo, hi + 1))
        placed: list[tuple[int, BBox]] = []
        for _ in range(target):
            for attempt in range(1000):
                w = float(rng.uniform(_BOX_MIN, _BOX_MAX))
                h = float(rng.uniform(_BOX_MIN, _BOX_MAX))
                x = float(rng.uniform(0, _IMAGE_W - w))
                y = float(rng.uniform(0, _IMAGE_H - h))
                cat = int(rng.integers(n_classes)) + 1
                box = BBox(x, y, w, h)
                same = [b for c, b in placed if c == cat]
                if not same or float(iou_matrix([box], same).max()) <= _MAX_SAME_CLASS_IOU:
                    placed.append((cat, box))
                    break
            else:
                raise InvalidConfigError(
                    "could not place a box without heavy same-class overlap; "
                    "reduce instances_per_image")
        for cat, box in placed:
            annotations.append(AnnotationRecord(
                id=next_ann, image_id=image_id, category_id=cat, bbox=box))
            next_ann += 1

    ids = np.arange(1, n_images + 1)
    rng.shuffle(ids)
    half = n_images // 2
    train_ids = set(int(i) for i in ids[:half])

    def split(selected: set[int]) -> Dataset:
        return Dataset(
            images=tuple(i for i in images if i.id in selected),
            categories=categories,
            annotations=tuple(a for a in annotations if a.image_id in selected),
        )

    hidden = split(train_ids)
    query = split(set(int(i) for i in ids) - train_ids)
    support_seed = int(rng.integers(0, 2 ** 63))
    visible = sample_support(hidden, k_shot, support_seed)
    return World(hidden_gt=hidden, visible_train=visible, query_gt=query)


def _greedy_match_counts(train: Dataset, hidden: Dataset,
                         iou_thresh: float = 0.5):
    """Per class: hidden instances, training annotations, and greedy matches
    (highest IoU first, each annotation consumes at most one instance)."""
    class_ids = sorted(hidden.category_ids())
    n_hidden = {c: 0 for c in class_ids}
    n_train = {c: 0 for c in class_ids}
    matched = {c: 0 for c in class_ids}

    hidden_by_group: dict[tuple[int, int], list] = {}
    for ann in hidden.annotations:
        n_hidden[ann.category_id] += 1
        hidden_by_group.setdefault((ann.image_id, ann.category_id), []).append(ann)
    train_by_group: dict[tuple[int, int], list] = {}
    for ann in train.annotations:
        if ann.category_id not in n_train:
            raise UnresolvableReferenceError(
                f"training annotation {ann.id} references category "
                f"{ann.category_id} outside the hidden universe")
        n_train[ann.category_id] += 1
        train_by_group.setdefault((ann.image_id, ann.category_id), []).append(ann)

    for key, train_anns in train_by_group.items():
        hidden_anns = hidden_by_group.get(key)
        if not hidden_anns:
            continue
        mat = iou_matrix([a.bbox for a in hidden_anns],
                         [a.bbox for a in train_anns])
        pairs = sorted(
            ((float(mat[hi, ti]), hi, ti)
             for hi in range(len(hidden_anns)) for ti in range(len(train_anns))),
            key=lambda p: (-p[0], p[1], p[2]))
        used_h: set[int] = set()
        used_t: set[int] = set()
        for value, hi, ti in pairs:
            if value < iou_thresh:
                break
            if hi in used_h or ti in used_t:
                continue
            used_h.add(hi)
            used_t.add(ti)
            matched[key[1]] += 1
    return class_ids, n_hidden, n_train, matched


def coverage(train_annotations: Dataset, hidden_gt: Dataset) -> dict[int, float]:
    """Per class: fraction of hidden instances matched (same image, same
    class, IoU >= 0.5) by some training annotation; greedy highest-IoU
    matching, one hidden instance per training annotation. Classes without
    hidden instances get 0.0."""
    class_ids, n_hidden, _, matched = _greedy_match_counts(
        train_annotations, hidden_gt)
    return {c: (matched[c] / n_hidden[c] if n_hidden[c] else 0.0)
            for c in class_ids}


def supervision_quality(train_annotations: Dataset,
                        hidden_gt: Dataset) -> dict[int, float]:
    """Coverage discounted for label noise.

    Training annotations that match nothing in the hidden truth (bad pseudo
    boxes, false positives) dilute the supervision signal: the recall-style
    coverage of each class is multiplied by
    ``min(1, precision / 0.45) ** 2.5``, where precision is the fraction of
    that class's training annotations that matched a hidden instance. With
    clean annotations this equals plain :func:`coverage`.
    """
    class_ids, n_hidden, n_train, matched = _greedy_match_counts(
        train_annotations, hidden_gt)
    out = {}
    for c in class_ids:
        recall = matched[c] / n_hidden[c] if n_hidden[c] else 0.0
        precision = matched[c] / n_train[c] if n_train[c] else 0.0
        factor = min(1.0, precision / QUALITY_PRECISION_KNEE) \
            ** QUALITY_PRECISION_EXPONENT
        out[c] = recall * factor
    return out


def simulate_predictions(world: World, cov: dict[int, float],
                         cfg: SimulatorConfig, image_ids: list[int],
                         round: int) -> PredictionSet:
    """Draw one round of synthetic detections for the requested images.

    Per-image RNG streams are keyed by (seed, round, image_id), so the
    result for an image does not depend on how requests are batched.
    """
    class_ids = world.category_ids()
    for c in class_ids:
        if c not in cov:
            raise InvalidConfigError(f"coverage map is missing class {c}")
    mean_cov = float(np.mean([cov[c] for c in class_ids]))
    lam = (cfg.lambda_fp_max * (1.0 - mean_cov)
           + cfg.lambda_fp_min * mean_cov)

    detections: list[Detection] = []
    for image_id in image_ids:
        img = world.image_record(image_id)
        rng = np.random.default_rng(np.random.SeedSequence(
            [cfg.seed & _MASK64, round & _MASK64, image_id & _MASK64]))
        for ann in world.complete_annotations(image_id):
            c = ann.category_id
            p_emit = cfg.p_min + (cfg.p_max - cfg.p_min) * cov[c]
            if not rng.random() < p_emit:
                continue
            u = rng.random()
            scale = cfg.sigma_max * (1.0 - cfg.beta * cov[c]) * 2.0 * u
            box = ann.bbox
            nx = box.x + rng.normal(0.0, scale * box.w)
            nw = box.w + rng.normal(0.0, scale * box.w)
            ny = box.y + rng.normal(0.0, scale * box.h)
            nh = box.h + rng.normal(0.0, scale * box.h)
            nw = min(max(nw, 1.0), float(img.width))
            nh = min(max(nh, 1.0), float(img.height))
            nx = min(max(nx, 0.0), img.width - nw)
            ny = min(max(ny, 0.0), img.height - nh)
            certainty = 1.0 - u * (1.0 - cov[c])
            score = float(rng.beta(1.0 + cfg.conf_tp_alpha * certainty, 2.0))
            detections.append(Detection(image_id, c, BBox(nx, ny, nw, nh), score))
        for _ in range(int(rng.poisson(lam))):
            fw = float(rng.uniform(4.0, img.width / 3.0))
            fh = float(rng.uniform(4.0, img.height / 3.0))
            fx = float(rng.uniform(0.0, img.width - fw))
            fy = float(rng.uniform(0.0, img.height - fh))
            fc = class_ids[int(rng.integers(len(class_ids)))]
            score = float(rng.beta(1.0, 3.0))
            detections.append(Detection(image_id, fc, BBox(fx, fy, fw, fh), score))
    return PredictionSet(tuple(detections), round=round)


def save_world(world: World, out_dir, cfg: SimulatorConfig | None = None,
               generation: dict | None = None) -> None:
    """Write a world directory: hidden_gt.json, visible_train.json,
    query_gt.json, config.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(world.hidden_gt, out / "hidden_gt.json")
    save_dataset(world.visible_train, out / "visible_train.json")
    save_dataset(world.query_gt, out / "query_gt.json")
    doc: dict = {}
    if cfg is not None:
        doc["simulator"] = cfg.to_json_dict()
    if generation is not None:
        doc["generation"] = generation
    from ._io import atomic_write_bytes
    atomic_write_bytes(out / "config.json",
                       json.dumps(doc, indent=2, sort_keys=True).encode() + b"\n")


def load_world(world_dir) -> tuple[World, SimulatorConfig | None]:
    src = Path(world_dir)
    world = World(
        hidden_gt=load_dataset(src / "hidden_gt.json"),
        visible_train=load_dataset(src / "visible_train.json"),
        query_gt=load_dataset(src / "query_gt.json"),
    )
    cfg = None
    config_path = src / "config.json"
    if config_path.exists():
        doc = json.loads(config_path.read_text())
        if "simulator" in doc:
            cfg = SimulatorConfig.from_json_dict(doc["simulator"])
    return world, cfg
