#!/usr/bin/env python3
"""mAP@0.5 evaluation: perfect detector, degraded detector, PR curves."""
import numpy as np

from pseudoloop import BBox, Detection, PredictionSet, evaluate, make_world

# borrow a synthetic world for a realistic ground-truth layout
world = make_world(n_images=20, n_classes=3, instances_per_image=(3, 7),
                   k_shot=1, seed=42)
gt = world.query_gt
print(f"query split: {len(gt.images)} images, {len(gt.annotations)} boxes")

perfect = PredictionSet(tuple(
    Detection(a.image_id, a.category_id, a.bbox, 1.0) for a in gt.annotations))
report = evaluate(gt, perfect)
print("\nGT evaluated against itself:")
print(report.to_text_table())

# degrade: drop 30% of detections, jitter the rest, add low-score clutter
rng = np.random.default_rng(1)
noisy = []
for ann in gt.annotations:
    if rng.random() < 0.3:
        continue
    jit = rng.normal(0, 0.1, size=4)
    box = ann.bbox
    noisy.append(Detection(
        ann.image_id, ann.category_id,
        BBox(box.x + jit[0] * box.w, box.y + jit[1] * box.h,
             box.w * (1 + jit[2]), box.h * (1 + jit[3])),
        float(rng.uniform(0.5, 1.0))))
for _ in range(40):
    img = gt.images[int(rng.integers(len(gt.images)))]
    w, h = rng.uniform(20, 120, size=2)
    noisy.append(Detection(
        img.id, int(rng.integers(1, 4)),
        BBox(float(rng.uniform(0, img.width - w)),
             float(rng.uniform(0, img.height - h)), float(w), float(h)),
        float(rng.uniform(0.0, 0.45))))

report = evaluate(gt, PredictionSet(tuple(noisy)))
print("\ndegraded detector:")
print(report.to_text_table())

best = max(report.per_class, key=lambda c: c.ap)
print(f"\nPR curve for '{best.name}' (first 8 points):")
for recall, precision in best.pr_curve[:8]:
    print(f"  recall {recall:.3f}  precision {precision:.3f}")
