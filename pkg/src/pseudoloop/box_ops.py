"""Box geometry and prediction post-processing: IoU, score filtering (tau_s),
and class-wise greedy NMS (tau_n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .coco import BBox, Dataset
from .errors import MalformedPredictionsError, UnresolvableReferenceError

__all__ = [
    "Detection",
    "PredictionSet",
    "class_wise_nms",
    "filter_by_score",
    "iou",
    "iou_matrix",
    "parse_predictions",
    "serialize_predictions",
]


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float


@dataclass(frozen=True)
class PredictionSet:
    """Raw detector output for one self-training round."""

    detections: tuple[Detection, ...] = ()
    round: int = 0

    def __len__(self) -> int:
        return len(self.detections)

    def for_image_ids(self, image_ids: Iterable[int]) -> "PredictionSet":
        wanted = set(image_ids)
        return replace(self, detections=tuple(
            d for d in self.detections if d.image_id in wanted))

    def check_resolvable(self, ds: Dataset) -> None:
        image_ids = ds.image_ids()
        category_ids = ds.category_ids()
        for d in self.detections:
            if d.image_id not in image_ids:
                raise UnresolvableReferenceError(
                    f"detection references unknown image {d.image_id}")
            if d.category_id not in category_ids:
                raise UnresolvableReferenceError(
                    f"detection references unknown category {d.category_id}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when they do not overlap.

    Identical geometry gives exactly 1.0; rounding can otherwise leave the
    corner arithmetic an ulp off, so the ratio is capped into [0, 1].
    """
    if a == b:
        return 1.0
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = min(ix * iy, a.area, b.area)
    return min(1.0, inter / (a.area + b.area - inter))


def iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b)); agrees with scalar :func:`iou`."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    raw_a = np.array([(b.x, b.y, b.w, b.h) for b in boxes_a])
    raw_b = np.array([(b.x, b.y, b.w, b.h) for b in boxes_b])
    a = np.column_stack([raw_a[:, 0], raw_a[:, 1],
                         raw_a[:, 0] + raw_a[:, 2], raw_a[:, 1] + raw_a[:, 3]])
    b = np.column_stack([raw_b[:, 0], raw_b[:, 1],
                         raw_b[:, 0] + raw_b[:, 2], raw_b[:, 1] + raw_b[:, 3]])
    ix = (np.minimum(a[:, None, 2], b[None, :, 2])
          - np.maximum(a[:, None, 0], b[None, :, 0])).clip(min=0.0)
    iy = (np.minimum(a[:, None, 3], b[None, :, 3])
          - np.maximum(a[:, None, 1], b[None, :, 1])).clip(min=0.0)
    area_a = raw_a[:, 2] * raw_a[:, 3]
    area_b = raw_b[:, 2] * raw_b[:, 3]
    inter = np.minimum(ix * iy,
                       np.minimum(area_a[:, None], area_b[None, :]))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.minimum(1.0, inter / (area_a[:, None] + area_b[None, :] - inter))
    out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)
    identical = (raw_a[:, None, :] == raw_b[None, :, :]).all(axis=-1)
    out[identical] = 1.0
    return out


def filter_by_score(preds: PredictionSet, tau_s: float) -> PredictionSet:
    """Keep detections with score >= tau_s (the boundary is inclusive:
    only scores strictly lower than the threshold are removed). Order is
    preserved."""
    return replace(preds, detections=tuple(
        d for d in preds.detections if d.score >= tau_s))


def class_wise_nms(preds: PredictionSet, tau_n: float) -> PredictionSet:
    """Greedy non-maximum suppression, applied independently per
    (image, category) group.

    Within a group, detections are visited by descending score (ties broken
    by smaller original index); each kept detection suppresses every
    remaining group member with IoU strictly greater than ``tau_n``.
    Detections of different classes or images never interact. The output is
    sorted by (image_id, category_id, score desc, original index).
    """
    groups: dict[tuple[int, int], list[int]] = {}
    for idx, det in enumerate(preds.detections):
        groups.setdefault((det.image_id, det.category_id), []).append(idx)

    kept: list[tuple[int, int, float, int]] = []  # (image, cat, -score, idx)
    for key in sorted(groups):
        order = sorted(groups[key],
                       key=lambda i: (-preds.detections[i].score, i))
        boxes = [preds.detections[i].bbox for i in order]
        mat = iou_matrix(boxes, boxes)
        alive = np.ones(len(order), dtype=bool)
        for pos in range(len(order)):
            if not alive[pos]:
                continue
            suppress = mat[pos] > tau_n
            suppress[: pos + 1] = False
            alive[suppress] = False
        kept.extend((key[0], key[1], -preds.detections[order[pos]].score,
                     order[pos]) for pos in range(len(order)) if alive[pos])

    kept.sort()
    return replace(preds, detections=tuple(
        preds.detections[idx] for _, _, _, idx in kept))


def _detection_dict(det: Detection) -> dict:
    return {
        "image_id": det.image_id,
        "category_id": det.category_id,
        "bbox": [det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h],
        "score": det.score,
    }


def serialize_predictions(preds: PredictionSet) -> bytes:
    """Emit the wrapped results form: {"round": t, "detections": [...]}.

    Detection entries use the COCO results key order, so output bytes are
    deterministic for equal inputs.
    """
    doc = {"round": preds.round,
           "detections": [_detection_dict(d) for d in preds.detections]}
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=True).encode("utf-8")


def parse_predictions(data: bytes | str, *, default_round: int = 0) -> PredictionSet:
    """Parse a detection results file.

    Accepts either a bare JSON array of {image_id, category_id, bbox, score}
    entries (stock COCO results) or the wrapped {round, detections: [...]}
    form.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPredictionsError(f"input is not UTF-8: {exc}") from exc
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedPredictionsError(f"input is not valid JSON: {exc}") from exc

    round_ = default_round
    if isinstance(raw, dict):
        if "detections" not in raw:
            raise MalformedPredictionsError("wrapper object is missing 'detections'")
        entries = raw["detections"]
        round_ = raw.get("round", default_round)
        if not isinstance(round_, int) or isinstance(round_, bool) or round_ < 0:
            raise MalformedPredictionsError("'round' must be a non-negative integer")
    elif isinstance(raw, list):
        entries = raw
    else:
        raise MalformedPredictionsError("expected an array or a wrapper object")
    if not isinstance(entries, list):
        raise MalformedPredictionsError("'detections' must be an array")

    detections = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise MalformedPredictionsError("detection entries must be objects")
        try:
            bbox_raw = entry["bbox"]
            if len(bbox_raw) != 4:
                raise MalformedPredictionsError("bbox must be [x, y, w, h]")
            det = Detection(
                image_id=int(entry["image_id"]),
                category_id=int(entry["category_id"]),
                bbox=BBox(*(float(v) for v in bbox_raw)),
                score=float(entry["score"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPredictionsError(f"bad detection entry: {exc}") from exc
        if not 0.0 <= det.score <= 1.0:
            raise MalformedPredictionsError(
                f"score {det.score} outside [0, 1]")
        detections.append(det)
    return PredictionSet(tuple(detections), round_)
