#!/usr/bin/env python3
"""Build a small annotation set, round-trip it through JSON, validate it,
and draw a 1-shot support view."""
import numpy as np

from pseudoloop import (
    AnnotationRecord, BBox, CategoryRecord, Dataset, ImageRecord,
    parse_dataset, sample_support, serialize_dataset, validate,
)

rng = np.random.default_rng(0)

images = tuple(ImageRecord(id=i + 1, file_name=f"frame_{i:03d}.jpg",
                           width=640, height=480) for i in range(4))
categories = (CategoryRecord(id=1, name="car"),
              CategoryRecord(id=2, name="truck"))
annotations = []
for k in range(12):
    w, h = rng.uniform(30, 120, size=2)
    annotations.append(AnnotationRecord(
        id=k + 1,
        image_id=int(rng.integers(1, 5)),
        category_id=int(rng.integers(1, 3)),
        bbox=BBox(float(rng.uniform(0, 640 - w)),
                  float(rng.uniform(0, 480 - h)), float(w), float(h))))
ds = Dataset(images, categories, tuple(annotations))

blob = serialize_dataset(ds)
print(f"serialized to {len(blob)} bytes; first 120: {blob[:120].decode()}...")

back = parse_dataset(blob)
print("parse(serialize(ds)) == ds:", back == ds)
print("second serialization byte-identical:", serialize_dataset(back) == blob)
print("violations on the valid set:", validate(ds))

# break an invariant on purpose: validate reports rather than raises
broken = Dataset(ds.images, ds.categories, ds.annotations + (
    AnnotationRecord(id=99, image_id=1, category_id=1,
                     bbox=BBox(0, 0, 0.0, 10), area=1.0),))
for violation in validate(broken):
    print("found:", violation)

# a 1-shot support view keeps every image but only k boxes per class,
# which is exactly the sparse-annotation regime the loop is built for
support = sample_support(ds, k=1, seed=7)
print(f"support set: {len(support.annotations)} annotations "
      f"across {len(support.images)} images (unchanged)")
print("same seed, same draw:",
      sample_support(ds, k=1, seed=7) == support)
