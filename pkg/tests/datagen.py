"""Random generators for test inputs (seeded, numpy-backed)."""

from __future__ import annotations

import numpy as np

from pseudoloop import (
    AnnotationRecord,
    AnnotationSource,
    BBox,
    CategoryRecord,
    Dataset,
    Detection,
    ImageRecord,
    PredictionSet,
)

_EXTRA_POOL = (
    ("license", 3),
    ("flickr_url", "http://example.invalid/x"),
    ("note", "hand checked"),
    ("weights", [0.5, 1.5]),
    ("nested", {"a": 1, "b": [True, None]}),
)


def _maybe_extras(rng) -> dict:
    if rng.random() < 0.5:
        return {}
    picks = rng.choice(len(_EXTRA_POOL), size=rng.integers(1, 3), replace=False)
    return {(_EXTRA_POOL[int(i)][0]): _EXTRA_POOL[int(i)][1] for i in picks}


def random_dataset(rng: np.random.Generator, max_images: int = 6,
                   max_categories: int = 4, max_annotations: int = 15) -> Dataset:
    """A structurally valid dataset with random content, extras included."""
    n_img = int(rng.integers(1, max_images + 1))
    n_cat = int(rng.integers(1, max_categories + 1))
    images = tuple(
        ImageRecord(id=i + 1, file_name=f"img_{i + 1}.jpg",
                    width=int(rng.integers(100, 2000)),
                    height=int(rng.integers(100, 2000)),
                    extra=_maybe_extras(rng))
        for i in range(n_img))
    categories = tuple(
        CategoryRecord(id=c + 1, name=f"thing_{c + 1}", extra=_maybe_extras(rng))
        for c in range(n_cat))

    annotations = []
    for a in range(int(rng.integers(0, max_annotations + 1))):
        img = images[int(rng.integers(n_img))]
        w = float(rng.uniform(1, img.width / 2))
        h = float(rng.uniform(1, img.height / 2))
        x = float(rng.uniform(0, img.width - w))
        y = float(rng.uniform(0, img.height - h))
        source = AnnotationSource.GROUND_TRUTH
        score = None
        roll = rng.random()
        if roll < 0.25:
            source = AnnotationSource.PSEUDO
            score = float(rng.random())
        elif roll < 0.35:
            source = AnnotationSource.EXTERNAL
        annotations.append(AnnotationRecord(
            id=a + 1,
            image_id=img.id,
            category_id=int(rng.integers(n_cat)) + 1,
            bbox=BBox(x, y, w, h),
            area=float(w * h) if rng.random() < 0.8 else float(rng.uniform(1, 50)),
            iscrowd=int(rng.random() < 0.1),
            source=source,
            score=score,
            extra=_maybe_extras(rng),
        ))
    extra = {"info": {"description": "generated"}} if rng.random() < 0.4 else {}
    return Dataset(images, categories, tuple(annotations), extra)


def random_prediction_set(rng: np.random.Generator, n_images: int = 3,
                          n_classes: int = 3, max_dets: int = 30,
                          span: float = 200.0) -> PredictionSet:
    dets = []
    for _ in range(int(rng.integers(0, max_dets + 1))):
        w = float(rng.uniform(5, span / 2))
        h = float(rng.uniform(5, span / 2))
        dets.append(Detection(
            image_id=int(rng.integers(1, n_images + 1)),
            category_id=int(rng.integers(1, n_classes + 1)),
            bbox=BBox(float(rng.uniform(0, span - w)),
                      float(rng.uniform(0, span - h)), w, h),
            score=float(rng.random()),
        ))
    return PredictionSet(tuple(dets), round=int(rng.integers(0, 4)))
