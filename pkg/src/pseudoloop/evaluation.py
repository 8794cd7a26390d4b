"""Detection evaluation: greedy matching at an IoU threshold, per-class
precision-recall, average precision, and dataset-level mAP.

Matching follows the Pascal-VOC convention: within each (image, class)
group, detections are visited in score-descending order and claim the
unmatched ground-truth box with the highest IoU, provided it reaches the
threshold. AP integrates the monotone (all-point interpolated) precision
envelope over every recall breakpoint, which keeps the value exact and
oracle-checkable.

Only ground-truth-source annotations count as ground truth; pseudo and
external annotations in the reference dataset are ignored. Crowd regions
(iscrowd=1) neither provide true positives nor trigger false positives:
they are excluded from the ground-truth pool, and an otherwise-unmatched
detection overlapping a same-class crowd region at or above the threshold
is dropped from scoring entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .box_ops import PredictionSet, iou_matrix
from .coco import AnnotationSource, Dataset
from .errors import NoGroundTruthError

__all__ = [
    "ClassEval",
    "EvalReport",
    "MatchRecord",
    "average_precision",
    "evaluate",
    "match_detections",
]


@dataclass(frozen=True)
class MatchRecord:
    """Outcome of scoring one detection against the ground truth."""

    detection_index: int
    image_id: int
    category_id: int
    score: float
    matched_gt_id: int | None
    iou: float
    is_tp: bool


@dataclass(frozen=True)
class ClassEval:
    category_id: int
    name: str
    ap: float
    n_gt: int
    n_tp: int
    n_fp: int
    pr_curve: tuple[tuple[float, float], ...]  # cumulative (recall, precision)


@dataclass(frozen=True)
class EvalReport:
    map_50: float
    iou_threshold: float
    per_class: tuple[ClassEval, ...]

    def ap_by_category(self) -> dict[int, float]:
        return {c.category_id: c.ap for c in self.per_class}

    def to_json_dict(self, include_pr_curves: bool = False) -> dict:
        doc = {
            "map_50": self.map_50,
            "iou_threshold": self.iou_threshold,
            "per_class": [
                {"category_id": c.category_id, "name": c.name, "ap": c.ap,
                 "n_gt": c.n_gt, "n_tp": c.n_tp, "n_fp": c.n_fp}
                for c in self.per_class
            ],
        }
        if include_pr_curves:
            doc["pr_curves"] = {
                str(c.category_id): [[r, p] for r, p in c.pr_curve]
                for c in self.per_class
            }
        return doc

    def to_text_table(self) -> str:
        width = max([len(c.name) for c in self.per_class] + [len("category")])
        lines = [f"{'category':<{width}}  {'ap':>8}  {'n_gt':>6}  {'n_tp':>6}  {'n_fp':>6}"]
        for c in self.per_class:
            lines.append(f"{c.name:<{width}}  {c.ap:>8.4f}  {c.n_gt:>6}  "
                         f"{c.n_tp:>6}  {c.n_fp:>6}")
        lines.append(f"{'mAP@%.2f' % self.iou_threshold:<{width}}  {self.map_50:>8.4f}")
        return "\n".join(lines)


def match_detections(gt: Dataset, preds: PredictionSet,
                     iou_thresh: float = 0.5) -> list[MatchRecord]:
    """Label every scoreable detection tp or fp.

    Detections ignored by the crowd rule produce no record. Records come out
    sorted by (image_id, category_id, score desc, detection index).
    """
    preds.check_resolvable(gt)

    gt_real: dict[tuple[int, int], list] = {}
    gt_crowd: dict[tuple[int, int], list] = {}
    for ann in gt.annotations:
        if ann.source is not AnnotationSource.GROUND_TRUTH:
            continue
        key = (ann.image_id, ann.category_id)
        (gt_crowd if ann.iscrowd else gt_real).setdefault(key, []).append(ann)

    by_group: dict[tuple[int, int], list[int]] = {}
    for idx, det in enumerate(preds.detections):
        by_group.setdefault((det.image_id, det.category_id), []).append(idx)

    records: list[MatchRecord] = []
    for key in sorted(by_group):
        det_indices = sorted(by_group[key],
                             key=lambda i: (-preds.detections[i].score, i))
        real = gt_real.get(key, [])
        crowd = gt_crowd.get(key, [])
        det_boxes = [preds.detections[i].bbox for i in det_indices]
        real_mat = iou_matrix(det_boxes, [a.bbox for a in real])
        crowd_mat = iou_matrix(det_boxes, [a.bbox for a in crowd])
        taken = np.zeros(len(real), dtype=bool)
        for pos, det_idx in enumerate(det_indices):
            det = preds.detections[det_idx]
            best_iou, best_gt = 0.0, -1
            for g in range(len(real)):
                if taken[g]:
                    continue
                if real_mat[pos, g] > best_iou:
                    best_iou, best_gt = float(real_mat[pos, g]), g
            if best_gt >= 0 and best_iou >= iou_thresh:
                taken[best_gt] = True
                records.append(MatchRecord(det_idx, det.image_id,
                                           det.category_id, det.score,
                                           real[best_gt].id, best_iou, True))
                continue
            if len(crowd) and float(crowd_mat[pos].max()) >= iou_thresh:
                continue  # fired on a crowd region: neither tp nor fp
            records.append(MatchRecord(det_idx, det.image_id, det.category_id,
                                       det.score, None, best_iou, False))
    return records


def average_precision(matches: Sequence[MatchRecord], n_gt: int) -> float:
    """All-point interpolated AP from tp/fp labels.

    Matches are ranked by score descending (ties by detection index); the
    precision envelope is made monotone from the right and integrated over
    every recall breakpoint.
    """
    if n_gt < 1:
        raise NoGroundTruthError("AP is undefined with zero ground-truth instances")
    if not matches:
        return 0.0
    ranked = sorted(matches, key=lambda m: (-m.score, m.detection_index))
    tp = np.cumsum([1 if m.is_tp else 0 for m in ranked])
    fp = np.cumsum([0 if m.is_tp else 1 for m in ranked])
    recall = tp / n_gt
    precision = tp / (tp + fp)

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _pr_curve(matches: Sequence[MatchRecord],
              n_gt: int) -> tuple[tuple[float, float], ...]:
    ranked = sorted(matches, key=lambda m: (-m.score, m.detection_index))
    tp = fp = 0
    points = []
    for m in ranked:
        tp, fp = tp + m.is_tp, fp + (not m.is_tp)
        points.append((tp / n_gt, tp / (tp + fp)))
    return tuple(points)


def evaluate(gt: Dataset, preds: PredictionSet,
             iou_thresh: float = 0.5) -> EvalReport:
    """Score a prediction set against ground truth and aggregate mAP.

    Classes with zero (non-crowd) ground-truth instances are excluded from
    the mean rather than scored as zero; with no eligible class at all,
    map_50 is 0.0.
    """
    records = match_detections(gt, preds, iou_thresh)
    by_class: dict[int, list[MatchRecord]] = {}
    for rec in records:
        by_class.setdefault(rec.category_id, []).append(rec)

    n_gt_by_class: dict[int, int] = {}
    for ann in gt.annotations:
        if ann.source is AnnotationSource.GROUND_TRUTH and not ann.iscrowd:
            n_gt_by_class[ann.category_id] = n_gt_by_class.get(ann.category_id, 0) + 1

    names = {c.id: c.name for c in gt.categories}
    per_class = []
    for cat_id in sorted(n_gt_by_class):
        n_gt = n_gt_by_class[cat_id]
        matches = by_class.get(cat_id, [])
        per_class.append(ClassEval(
            category_id=cat_id,
            name=names.get(cat_id, str(cat_id)),
            ap=average_precision(matches, n_gt),
            n_gt=n_gt,
            n_tp=sum(m.is_tp for m in matches),
            n_fp=sum(not m.is_tp for m in matches),
            pr_curve=_pr_curve(matches, n_gt),
        ))
    map_50 = float(np.mean([c.ap for c in per_class])) if per_class else 0.0
    return EvalReport(map_50=map_50, iou_threshold=iou_thresh,
                      per_class=tuple(per_class))
