#!/usr/bin/env python3
"""Sweep the pseudo-label score threshold and reproduce its characteristic
rise-then-fall: too low admits noise, too high starves the loop."""
from pathlib import Path

import numpy as np

from pseudoloop import PipelineConfig, make_world, sweep
from pseudoloop.pipeline import SweepResult

VALUES = [0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 0.95]
SEEDS = range(6)

rows = []
for seed in SEEDS:
    world = make_world(n_images=80, n_classes=3, instances_per_image=(3, 8),
                       k_shot=1, seed=seed)
    result = sweep(PipelineConfig(rounds_T=3), "tau_s", VALUES, world, [seed])
    rows.extend(result.rows)
combined = SweepResult(parameter="tau_s", rows=tuple(rows))

out = Path("runs/tau_s_sweep.csv")
out.parent.mkdir(parents=True, exist_ok=True)
out.write_text(combined.to_csv())
print(f"wrote {len(combined.rows)} rows to {out}\n")

means = combined.mean_by_value()
top = max(means.values())
print(f"{'tau_s':>6} {'mean mAP':>9}")
for value in VALUES:
    bar = "#" * int(round(40 * means[value] / top))
    print(f"{value:>6} {means[value]:>9.4f}  {bar}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spread = {v: [r.map_50 for r in combined.rows if r.param_value == v]
              for v in VALUES}
    plt.figure(figsize=(5, 3.2))
    plt.errorbar(VALUES, [means[v] for v in VALUES],
                 yerr=[np.std(spread[v]) for v in VALUES],
                 marker="o", capsize=3)
    plt.xlabel("pseudo-label score threshold")
    plt.ylabel("final query mAP@0.5")
    plt.tight_layout()
    plt.savefig("runs/tau_s_sweep.png", dpi=150)
    print("\nplot saved to runs/tau_s_sweep.png")
except ImportError:
    pass
