#!/usr/bin/env python3
"""The full closed loop: fine-tune, predict, filter, NMS, merge, repeat.

Run artifacts land in runs/demo_loop/round_*/ and can be replayed offline
with the file backend (see docs/format.md).
"""
from pathlib import Path

from pseudoloop import (
    PipelineConfig, SimulatorBackend, SimulatorConfig, make_world, run_pipeline,
)

SEED = 1
world = make_world(n_images=80, n_classes=3, instances_per_image=(3, 8),
                   k_shot=1, seed=SEED)
print(f"world: {len(world.hidden_gt.images)} train / "
      f"{len(world.query_gt.images)} query images, "
      f"{len(world.visible_train.annotations)} visible annotations (1-shot)")

cfg = PipelineConfig(rounds_T=4, tau_s=0.6, tau_n=0.5, seed=SEED)
backend = SimulatorBackend(world, SimulatorConfig(seed=SEED))
run_dir = Path("runs/demo_loop")

final, reports = run_pipeline(world.visible_train, world.train_image_ids(),
                              cfg, query=world.query_gt, run_dir=run_dir,
                              backend=backend)

print(f"\n{'round':>5} {'raw':>5} {'kept':>5} {'train size':>10} {'query mAP':>9}")
train_size = len(world.visible_train.annotations)
for rep in reports:
    train_size = len(world.visible_train.annotations) + rep.n_pseudo_kept
    print(f"{rep.round_index:>5} {rep.n_raw:>5} {rep.n_pseudo_kept:>5} "
          f"{train_size:>10} {rep.eval_report.map_50:>9.4f}")

baseline = reports[0].eval_report.map_50
best = reports[-1].eval_report.map_50
print(f"\nround-1 model (trained on the 1-shot set only): {baseline:.4f}")
print(f"final-round model: {best:.4f}  ({100 * (best - baseline):+.1f} points)")
print(f"final training set: {len(final.annotations)} annotations "
      f"({len(final.annotations) - len(world.visible_train.annotations)} pseudo)")
print(f"artifacts: {run_dir}/round_*/{{train,raw_preds,kept_preds,merged,report}}.json")
