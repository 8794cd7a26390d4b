"""COCO-style detection dataset model: parsing, serialization, validation,
and k-shot support sampling.

The canonical box convention is COCO xywh with real-valued coordinates.
Two non-standard annotation keys are understood: ``source`` (ground_truth /
pseudo / external; absent means ground truth) and ``score`` (pseudo-label
confidence). Unknown keys anywhere are preserved verbatim and re-emitted on
serialization, so stock COCO consumers can ignore the extensions. The full
wire format is documented in docs/format.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np

from .errors import (
    DuplicateIdError,
    InsufficientInstancesError,
    MalformedJsonError,
    SchemaViolationError,
    UnresolvableReferenceError,
)

__all__ = [
    "AnnotationRecord",
    "AnnotationSource",
    "BBox",
    "CategoryRecord",
    "Dataset",
    "ImageRecord",
    "Violation",
    "load_dataset",
    "parse_dataset",
    "sample_support",
    "save_dataset",
    "serialize_dataset",
    "validate",
]


class AnnotationSource(str, Enum):
    GROUND_TRUTH = "ground_truth"
    PSEUDO = "pseudo"
    EXTERNAL = "external"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, COCO convention: top-left corner plus size."""

    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_xyxy(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CategoryRecord:
    id: int
    name: str
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AnnotationRecord:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: float = -1.0  # sentinel: derive from bbox
    iscrowd: int = 0
    source: AnnotationSource = AnnotationSource.GROUND_TRUTH
    score: float | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.area < 0:
            object.__setattr__(self, "area", self.bbox.area)


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...] = ()
    categories: tuple[CategoryRecord, ...] = ()
    annotations: tuple[AnnotationRecord, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def image_ids(self) -> set[int]:
        return {img.id for img in self.images}

    def category_ids(self) -> set[int]:
        return {cat.id for cat in self.categories}

    def max_annotation_id(self) -> int:
        return max((a.id for a in self.annotations), default=0)

    def annotations_for_image(self, image_id: int) -> tuple[AnnotationRecord, ...]:
        return tuple(a for a in self.annotations if a.image_id == image_id)


@dataclass(frozen=True)
class Violation:
    """One broken invariant, attributed to a record."""

    record_kind: str  # "image" | "category" | "annotation" | "dataset"
    record_id: int | None
    rule: str

    def __str__(self) -> str:
        where = f"{self.record_kind} {self.record_id}" if self.record_id is not None \
            else self.record_kind
        return f"{where}: {self.rule}"


_SOURCE_VALUES = {s.value: s for s in AnnotationSource}


def _require(record: Mapping[str, Any], key: str, kinds, where: str):
    if key not in record:
        raise SchemaViolationError(f"{where}: missing required field '{key}'")
    value = record[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise SchemaViolationError(
            f"{where}: field '{key}' has type {type(value).__name__}"
        )
    return value


def _finite(value: float, key: str, where: str) -> float:
    out = float(value)
    if not np.isfinite(out):
        raise SchemaViolationError(f"{where}: field '{key}' is not finite")
    return out


def parse_dataset(data: bytes | str, *,
                  untagged_source: AnnotationSource = AnnotationSource.GROUND_TRUTH,
                  ) -> Dataset:
    """Parse and fully validate a COCO JSON byte stream.

    Unknown keys are kept on each record's ``extra`` mapping and re-emitted by
    :func:`serialize_dataset`. ``untagged_source`` is assigned to annotations
    that carry no explicit ``source`` key (ground truth by default; the
    external-dataset ingestion path passes ``EXTERNAL``).

    Raises MalformedJsonError, SchemaViolationError, DuplicateIdError, or
    UnresolvableReferenceError.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJsonError(f"input is not UTF-8: {exc}") from exc
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"input is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaViolationError("top level must be a JSON object")

    for key in ("images", "categories", "annotations"):
        if key in raw and not isinstance(raw[key], list):
            raise SchemaViolationError(f"top-level '{key}' must be an array")

    images = []
    for entry in raw.get("images", ()):
        if not isinstance(entry, dict):
            raise SchemaViolationError("image entries must be objects")
        where = f"image {entry.get('id', '?')}"
        images.append(ImageRecord(
            id=_require(entry, "id", int, where),
            file_name=_require(entry, "file_name", str, where),
            width=_require(entry, "width", int, where),
            height=_require(entry, "height", int, where),
            extra={k: v for k, v in entry.items()
                   if k not in ("id", "file_name", "width", "height")},
        ))

    categories = []
    for entry in raw.get("categories", ()):
        if not isinstance(entry, dict):
            raise SchemaViolationError("category entries must be objects")
        where = f"category {entry.get('id', '?')}"
        categories.append(CategoryRecord(
            id=_require(entry, "id", int, where),
            name=_require(entry, "name", str, where),
            extra={k: v for k, v in entry.items() if k not in ("id", "name")},
        ))

    annotations = []
    for entry in raw.get("annotations", ()):
        if not isinstance(entry, dict):
            raise SchemaViolationError("annotation entries must be objects")
        where = f"annotation {entry.get('id', '?')}"
        bbox_raw = _require(entry, "bbox", list, where)
        if len(bbox_raw) != 4 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in bbox_raw):
            raise SchemaViolationError(f"{where}: bbox must be [x, y, w, h]")
        bbox = BBox(*(_finite(v, "bbox", where) for v in bbox_raw))

        source = untagged_source
        if "source" in entry:
            tag = entry["source"]
            if tag not in _SOURCE_VALUES:
                raise SchemaViolationError(f"{where}: unknown source '{tag}'")
            source = _SOURCE_VALUES[tag]
        score = None
        if "score" in entry:
            score = _finite(_require(entry, "score", (int, float), where),
                            "score", where)

        area = entry.get("area")
        if area is not None:
            if isinstance(area, bool) or not isinstance(area, (int, float)):
                raise SchemaViolationError(f"{where}: field 'area' has type "
                                           f"{type(area).__name__}")
            area = _finite(area, "area", where)
        iscrowd = entry.get("iscrowd", 0)
        if isinstance(iscrowd, bool) or not isinstance(iscrowd, int):
            raise SchemaViolationError(f"{where}: field 'iscrowd' must be 0 or 1")

        known = ("id", "image_id", "category_id", "bbox", "area", "iscrowd",
                 "source", "score")
        annotations.append(AnnotationRecord(
            id=_require(entry, "id", int, where),
            image_id=_require(entry, "image_id", int, where),
            category_id=_require(entry, "category_id", int, where),
            bbox=bbox,
            area=bbox.area if area is None else area,
            iscrowd=iscrowd,
            source=source,
            score=score,
            extra={k: v for k, v in entry.items() if k not in known},
        ))

    extra = {k: v for k, v in raw.items()
             if k not in ("images", "categories", "annotations")}
    ds = Dataset(tuple(images), tuple(categories), tuple(annotations), extra)
    _raise_on_violations(ds)
    return ds


def _raise_on_violations(ds: Dataset) -> None:
    for v in validate(ds):
        if "duplicate" in v.rule:
            raise DuplicateIdError(str(v))
        if "does not resolve" in v.rule:
            raise UnresolvableReferenceError(str(v))
        raise SchemaViolationError(str(v))


def _image_dict(img: ImageRecord) -> dict:
    out = {"id": img.id, "file_name": img.file_name,
           "width": img.width, "height": img.height}
    out.update(sorted(img.extra.items()))
    return out


def _category_dict(cat: CategoryRecord) -> dict:
    out = {"id": cat.id, "name": cat.name}
    out.update(sorted(cat.extra.items()))
    return out


def _annotation_dict(ann: AnnotationRecord) -> dict:
    out = {
        "id": ann.id,
        "image_id": ann.image_id,
        "category_id": ann.category_id,
        "bbox": [ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h],
        "area": ann.area,
        "iscrowd": ann.iscrowd,
    }
    if ann.source is not AnnotationSource.GROUND_TRUTH:
        out["source"] = ann.source.value
    if ann.score is not None:
        out["score"] = ann.score
    out.update(sorted(ann.extra.items()))
    return out


def serialize_dataset(ds: Dataset) -> bytes:
    """Emit COCO-compatible JSON bytes.

    Output is byte-deterministic for equal datasets: keys follow a fixed
    documented order, extension keys are sorted, separators are compact, and
    source/score appear only when non-default.
    """
    doc = {
        "images": [_image_dict(i) for i in ds.images],
        "annotations": [_annotation_dict(a) for a in ds.annotations],
        "categories": [_category_dict(c) for c in ds.categories],
    }
    doc.update(sorted(ds.extra.items()))
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=True).encode("utf-8")


def load_dataset(path, **kwargs) -> Dataset:
    with open(path, "rb") as fh:
        return parse_dataset(fh.read(), **kwargs)


def save_dataset(ds: Dataset, path) -> None:
    from ._io import atomic_write_bytes
    atomic_write_bytes(path, serialize_dataset(ds))


def validate(ds: Dataset) -> list[Violation]:
    """Check every type invariant; violations are returned, never raised."""
    out: list[Violation] = []

    seen: set[int] = set()
    for img in ds.images:
        if img.id in seen:
            out.append(Violation("image", img.id, "duplicate image id"))
        seen.add(img.id)
        if img.width <= 0 or img.height <= 0:
            out.append(Violation("image", img.id,
                                 f"non-positive size {img.width}x{img.height}"))

    seen = set()
    for cat in ds.categories:
        if cat.id in seen:
            out.append(Violation("category", cat.id, "duplicate category id"))
        seen.add(cat.id)
        if not cat.name:
            out.append(Violation("category", cat.id, "empty name"))

    image_ids = ds.image_ids()
    category_ids = ds.category_ids()
    seen = set()
    for ann in ds.annotations:
        if ann.id in seen:
            out.append(Violation("annotation", ann.id, "duplicate annotation id"))
        seen.add(ann.id)
        if ann.image_id not in image_ids:
            out.append(Violation("annotation", ann.id,
                                 f"image_id {ann.image_id} does not resolve"))
        if ann.category_id not in category_ids:
            out.append(Violation("annotation", ann.id,
                                 f"category_id {ann.category_id} does not resolve"))
        box = ann.bbox
        if not all(np.isfinite(v) for v in (box.x, box.y, box.w, box.h)):
            out.append(Violation("annotation", ann.id, "bbox has non-finite values"))
        elif box.w <= 0 or box.h <= 0:
            out.append(Violation("annotation", ann.id,
                                 f"bbox size {box.w}x{box.h} must be positive"))
        if not np.isfinite(ann.area) or ann.area <= 0:
            out.append(Violation("annotation", ann.id, "area must be positive"))
        if ann.iscrowd not in (0, 1):
            out.append(Violation("annotation", ann.id, "iscrowd must be 0 or 1"))
        if ann.source is AnnotationSource.PSEUDO:
            if ann.score is None:
                out.append(Violation("annotation", ann.id,
                                     "pseudo annotation is missing score"))
        elif ann.score is not None:
            out.append(Violation("annotation", ann.id,
                                 f"score present on {ann.source.value} annotation"))
        if ann.score is not None and not 0.0 <= ann.score <= 1.0:
            out.append(Violation("annotation", ann.id,
                                 f"score {ann.score} outside [0, 1]"))
    return out


def sample_support(ds: Dataset, k: int, seed: int) -> Dataset:
    """Draw a k-shot support set: k annotations per category, all images kept.

    Sampling is uniform without replacement and deterministic per seed.
    Images whose annotations were not selected remain in the dataset with no
    annotations, which models the sparse single-instance labeling regime the
    self-training loop is designed for.
    """
    if k <= 0:
        raise InsufficientInstancesError(-1, 0, k)
    by_category: dict[int, list[int]] = {cat.id: [] for cat in ds.categories}
    for idx, ann in enumerate(ds.annotations):
        if ann.category_id in by_category:
            by_category[ann.category_id].append(idx)

    rng = np.random.default_rng(np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF))
    chosen: set[int] = set()
    for cat_id in sorted(by_category):
        pool = by_category[cat_id]
        if len(pool) < k:
            raise InsufficientInstancesError(cat_id, len(pool), k)
        picks = rng.choice(len(pool), size=k, replace=False)
        chosen.update(pool[int(p)] for p in picks)

    kept = tuple(ann for idx, ann in enumerate(ds.annotations) if idx in chosen)
    return replace(ds, annotations=kept)
