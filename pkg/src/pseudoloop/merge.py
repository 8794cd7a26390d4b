"""Fusing pseudo-labels with ground truth, and ingesting external datasets.

``to_pseudo_annotations`` turns surviving detections into pseudo-source
annotation records; ``merge_pseudo`` unions them with the original
annotations, optionally dropping pseudo boxes that duplicate a same-class
ground-truth box; ``merge_datasets`` folds an independently produced
annotation set (e.g. generatively augmented data) into an existing one,
unifying categories by name.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .box_ops import PredictionSet, iou
from .coco import AnnotationRecord, AnnotationSource, CategoryRecord, Dataset, ImageRecord
from .errors import CategoryConflictError, DuplicateIdError

__all__ = [
    "CrossRoundBehavior",
    "MergePolicy",
    "merge_datasets",
    "merge_pseudo",
    "to_pseudo_annotations",
]


class CrossRoundBehavior(str, Enum):
    FROM_SCRATCH = "from_scratch"  # round t merges into the original few-shot set
    ACCUMULATE = "accumulate"      # round t merges into the previous round's set


@dataclass(frozen=True)
class MergePolicy:
    """How pseudo-labels are admitted into the training set.

    ``gt_suppression_iou``: a pseudo box overlapping a same-class, same-image
    ground-truth box with IoU strictly above this is dropped (the plain
    union would supervise the same object twice). Set to 1.0 to disable.
    """

    gt_suppression_iou: float = 0.5
    cross_round_behavior: CrossRoundBehavior = CrossRoundBehavior.FROM_SCRATCH


def to_pseudo_annotations(preds: PredictionSet,
                          base: Dataset) -> list[AnnotationRecord]:
    """Convert detections into pseudo-source annotation records.

    Ids are allocated sequentially in input order, starting strictly above
    every annotation id in ``base``, so the result can be merged into
    ``base`` without collisions and deterministically.
    """
    preds.check_resolvable(base)
    next_id = base.max_annotation_id() + 1
    out = []
    for det in preds.detections:
        out.append(AnnotationRecord(
            id=next_id,
            image_id=det.image_id,
            category_id=det.category_id,
            bbox=det.bbox,
            area=det.bbox.area,
            iscrowd=0,
            source=AnnotationSource.PSEUDO,
            score=det.score,
        ))
        next_id += 1
    return out


def merge_pseudo(gt: Dataset, pseudo: list[AnnotationRecord],
                 policy: MergePolicy = MergePolicy()) -> Dataset:
    """Union ground truth with pseudo annotations under the merge policy.

    Ground-truth annotations are never dropped or altered. A pseudo
    annotation survives iff its IoU with every same-class, same-image
    ground-truth-source annotation is <= ``policy.gt_suppression_iou``.
    """
    existing_ids = {a.id for a in gt.annotations}
    for ann in pseudo:
        if ann.id in existing_ids:
            raise DuplicateIdError(f"pseudo annotation id {ann.id} already "
                                   f"exists in the target dataset")

    gt_boxes: dict[tuple[int, int], list] = {}
    for ann in gt.annotations:
        if ann.source is AnnotationSource.GROUND_TRUTH:
            gt_boxes.setdefault((ann.image_id, ann.category_id), []).append(ann.bbox)

    kept = []
    for ann in pseudo:
        rivals = gt_boxes.get((ann.image_id, ann.category_id), ())
        if all(iou(ann.bbox, box) <= policy.gt_suppression_iou for box in rivals):
            kept.append(ann)
    return replace(gt, annotations=gt.annotations + tuple(kept))


def _category_map(ds: Dataset, label: str) -> dict[str, int]:
    mapping: dict[str, int] = {}
    for cat in ds.categories:
        if cat.name in mapping and mapping[cat.name] != cat.id:
            raise CategoryConflictError(
                f"{label} dataset maps name '{cat.name}' to both ids "
                f"{mapping[cat.name]} and {cat.id}")
        mapping[cat.name] = cat.id
    return mapping


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Fold dataset ``b`` into ``a``.

    Categories are unified by name (conflicting name-to-id structure raises
    CategoryConflictError); b's images and annotations are re-identified with
    a stable offset (new id = old id + max(a ids) + 1) so both id spaces stay
    disjoint. Annotations from b keep their source tag.
    """
    names_a = _category_map(a, "left")
    names_b = _category_map(b, "right")

    cat_offset = max((c.id for c in a.categories), default=0) + 1
    cat_id_map: dict[int, int] = {}
    new_categories: list[CategoryRecord] = []
    for cat in b.categories:
        if cat.name in names_a:
            cat_id_map[cat.id] = names_a[cat.name]
        else:
            cat_id_map[cat.id] = cat.id + cat_offset
            new_categories.append(replace(cat, id=cat.id + cat_offset))
    del names_b  # only needed for the conflict check

    img_offset = max((i.id for i in a.images), default=0) + 1
    img_id_map = {img.id: img.id + img_offset for img in b.images}
    new_images: list[ImageRecord] = [
        replace(img, id=img_id_map[img.id]) for img in b.images]

    ann_offset = max((x.id for x in a.annotations), default=0) + 1
    new_annotations: list[AnnotationRecord] = [
        replace(ann,
                id=ann.id + ann_offset,
                image_id=img_id_map[ann.image_id],
                category_id=cat_id_map[ann.category_id])
        for ann in b.annotations]

    return Dataset(
        images=a.images + tuple(new_images),
        categories=a.categories + tuple(new_categories),
        annotations=a.annotations + tuple(new_annotations),
        extra=dict(a.extra),
    )
