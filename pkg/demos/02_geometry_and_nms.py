#!/usr/bin/env python3
"""IoU geometry, score filtering, and class-wise NMS on a cluttered scene."""
import numpy as np

from pseudoloop import BBox, Detection, PredictionSet, class_wise_nms, filter_by_score, iou

a = BBox(0, 0, 10, 10)
b = BBox(5, 5, 10, 10)
print("iou of quarter-overlapping squares:", iou(a, b), "(= 25/175)")
print("identity:", iou(a, a), " disjoint:", iou(a, BBox(50, 50, 5, 5)))

# a scene where a detector fired several times on each of three objects
rng = np.random.default_rng(3)
objects = [BBox(40, 40, 80, 60), BBox(220, 100, 90, 90), BBox(420, 260, 70, 50)]
detections = []
for obj in objects:
    for _ in range(5):
        jit = rng.normal(0, 6, size=4)
        detections.append(Detection(
            image_id=1, category_id=1,
            bbox=BBox(obj.x + jit[0], obj.y + jit[1],
                      max(4, obj.w + jit[2]), max(4, obj.h + jit[3])),
            score=float(rng.uniform(0.2, 0.99))))
# plus one box of another class right on top of an object: NMS never
# suppresses across classes
detections.append(Detection(1, 2, objects[0], 0.5))
preds = PredictionSet(tuple(detections))

kept = filter_by_score(preds, 0.6)
print(f"\nscore filter at 0.6: {len(preds)} -> {len(kept)}")

for tau_n in (0.3, 0.5, 0.7):
    survivors = class_wise_nms(kept, tau_n)
    print(f"class-wise NMS at tau_n={tau_n}: {len(kept)} -> {len(survivors)}")

survivors = class_wise_nms(kept, 0.5)
print("\nsurvivors (image, class, score):")
for det in survivors.detections:
    print(f"  img {det.image_id} class {det.category_id} "
          f"score {det.score:.2f} box ({det.bbox.x:.0f},{det.bbox.y:.0f},"
          f"{det.bbox.w:.0f},{det.bbox.h:.0f})")
print("idempotent:", class_wise_nms(survivors, 0.5) == survivors)
