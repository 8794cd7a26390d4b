"""The closed self-training loop and its sweep harness.

One round: fine-tune the backend on the current training set, predict on
the target images, drop low-confidence predictions (tau_s), apply
class-wise NMS (tau_n), convert survivors to pseudo annotations, and merge
them with the original few-shot annotations. Each round's intermediate
artifacts are written to a run directory so any round can be replayed
offline through the file backend.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from ._io import atomic_write_bytes, compact_json_bytes
from .backends import (
    BackendDescriptor,
    BackendKind,
    DetectorBackend,
    PredictRequest,
    SimulatorBackend,
    TrainRequest,
    build_backend,
)
from .box_ops import class_wise_nms, filter_by_score, serialize_predictions
from .coco import Dataset, serialize_dataset, validate
from .errors import InvalidConfigError, SchemaViolationError, UnresolvableReferenceError
from .evaluation import EvalReport, evaluate
from .merge import CrossRoundBehavior, MergePolicy, merge_pseudo, to_pseudo_annotations
from .simulator import SimulatorConfig, World

__all__ = [
    "PipelineConfig",
    "RoundReport",
    "SweepResult",
    "run_pipeline",
    "sweep",
]


@dataclass(frozen=True)
class PipelineConfig:
    """All loop hyperparameters.

    ``tau_s`` follows the threshold analysis of the underlying method
    (0.6 gives the best quality/quantity trade-off); ``tau_n`` mirrors the
    evaluation IoU. ``seed`` drives the simulator backend when the pipeline
    constructs one from the descriptor.
    """

    rounds_T: int = 3
    tau_s: float = 0.6
    tau_n: float = 0.5
    merge_policy: MergePolicy = MergePolicy()
    backend: BackendDescriptor = BackendDescriptor(BackendKind.SIMULATOR)
    eval_each_round: bool = True
    reset_weights_each_round: bool = False
    seed: int = 0
    epochs_hint: int = 50

    def __post_init__(self):
        if self.rounds_T < 1:
            raise InvalidConfigError("rounds_T must be >= 1")
        for name in ("tau_s", "tau_n"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfigError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 <= self.merge_policy.gt_suppression_iou <= 1.0:
            raise InvalidConfigError("gt_suppression_iou must be in [0, 1]")


@dataclass(frozen=True)
class RoundReport:
    """Observability for one round: stage counts, optional query evaluation,
    and wall-clock timings (timings stay in memory; the serialized report is
    byte-reproducible under replay)."""

    round_index: int
    n_raw: int
    n_after_filter: int
    n_after_nms: int
    n_pseudo_kept: int
    n_pseudo_dropped: int
    eval_report: EvalReport | None = None
    timings: Mapping[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "round": self.round_index,
            "counts": {
                "raw": self.n_raw,
                "after_filter": self.n_after_filter,
                "after_nms": self.n_after_nms,
                "pseudo_kept": self.n_pseudo_kept,
                "pseudo_dropped": self.n_pseudo_dropped,
            },
            "eval": (self.eval_report.to_json_dict()
                     if self.eval_report is not None else None),
        }


def _check_inputs(d_fs: Dataset, images_I: Sequence[int],
                  query: Dataset | None) -> None:
    problems = validate(d_fs)
    if problems:
        raise SchemaViolationError(
            f"few-shot dataset is invalid: {problems[0]}")
    known = d_fs.image_ids()
    missing = [i for i in images_I if i not in known]
    if missing:
        raise UnresolvableReferenceError(
            f"target images not present in the training dataset: {missing}")
    if query is not None:
        q_problems = validate(query)
        if q_problems:
            raise SchemaViolationError(f"query dataset is invalid: {q_problems[0]}")


def run_pipeline(d_fs: Dataset, images_I: Sequence[int], cfg: PipelineConfig,
                 query: Dataset | None = None, run_dir=None,
                 backend: DetectorBackend | None = None,
                 ) -> tuple[Dataset, list[RoundReport]]:
    """Execute T rounds of fine-tune / predict / filter / NMS / merge.

    Per round t, ``run_dir/round_t/`` receives train.json (the round's
    training input), raw_preds.json, kept_preds.json (post filter+NMS),
    merged.json (the round's output annotations), and report.json. Query
    evaluation, when a query set is given, predicts on the query images
    with the round's trained backend and applies the same NMS but no score
    cut (AP integrates over confidence); with ``eval_each_round`` off, only
    the final round is evaluated.

    A backend built here from a simulator descriptor has its stream seed
    replaced by ``cfg.seed``; an explicitly passed ``backend`` is used as
    is. A backend failure aborts the run and leaves completed-round
    artifacts intact.
    """
    _check_inputs(d_fs, images_I, query)
    if backend is None:
        backend = build_backend(cfg.backend)
        if isinstance(backend, SimulatorBackend):
            backend.config = replace(backend.config, seed=cfg.seed)

    out_dir = Path(run_dir) if run_dir is not None else None
    from_scratch = (cfg.merge_policy.cross_round_behavior
                    is CrossRoundBehavior.FROM_SCRATCH)

    current = d_fs
    reports: list[RoundReport] = []
    for t in range(1, cfg.rounds_T + 1):
        timings: dict[str, float] = {}
        round_dir = out_dir / f"round_{t}" if out_dir is not None else None
        if round_dir is not None:
            atomic_write_bytes(round_dir / "train.json",
                               serialize_dataset(current))

        tick = time.perf_counter()
        backend.train(TrainRequest(
            train_annotations=current,
            epochs_hint=cfg.epochs_hint,
            reset_weights=cfg.reset_weights_each_round or t == 1,
        ))
        timings["train_s"] = time.perf_counter() - tick

        tick = time.perf_counter()
        raw = backend.predict(PredictRequest(tuple(images_I)))
        timings["predict_s"] = time.perf_counter() - tick

        tick = time.perf_counter()
        filtered = filter_by_score(raw, cfg.tau_s)
        kept = class_wise_nms(filtered, cfg.tau_n)
        merge_base = d_fs if from_scratch else current
        pseudo = to_pseudo_annotations(kept, merge_base)
        merged = merge_pseudo(merge_base, pseudo, cfg.merge_policy)
        n_kept = len(merged.annotations) - len(merge_base.annotations)
        timings["postprocess_s"] = time.perf_counter() - tick

        eval_report = None
        if query is not None and (cfg.eval_each_round or t == cfg.rounds_T):
            tick = time.perf_counter()
            query_raw = backend.predict(
                PredictRequest(tuple(sorted(query.image_ids()))))
            eval_report = evaluate(query, class_wise_nms(query_raw, cfg.tau_n))
            timings["eval_s"] = time.perf_counter() - tick

        report = RoundReport(
            round_index=t,
            n_raw=len(raw),
            n_after_filter=len(filtered),
            n_after_nms=len(kept),
            n_pseudo_kept=n_kept,
            n_pseudo_dropped=len(pseudo) - n_kept,
            eval_report=eval_report,
            timings=timings,
        )
        if round_dir is not None:
            atomic_write_bytes(round_dir / "raw_preds.json",
                               serialize_predictions(raw))
            atomic_write_bytes(round_dir / "kept_preds.json",
                               serialize_predictions(kept))
            atomic_write_bytes(round_dir / "merged.json",
                               serialize_dataset(merged))
            atomic_write_bytes(round_dir / "report.json",
                               compact_json_bytes(report.to_json_dict()))
        reports.append(report)
        current = merged
    return current, reports


_SWEEPABLE = ("tau_s", "tau_n", "rounds_T")


@dataclass(frozen=True)
class SweepRow:
    param_value: float | int
    seed: int
    map_50: float


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    rows: tuple[SweepRow, ...]

    def mean_by_value(self) -> dict:
        sums: dict = {}
        for row in self.rows:
            total, count = sums.get(row.param_value, (0.0, 0))
            sums[row.param_value] = (total + row.map_50, count + 1)
        return {value: total / count for value, (total, count) in sums.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["param_value", "seed", "map_50"])
        for row in self.rows:
            writer.writerow([row.param_value, row.seed, f"{row.map_50:.6f}"])
        return buf.getvalue()


def sweep(base_cfg: PipelineConfig, parameter: str, values: Sequence,
          world: World, seeds: Sequence[int],
          simulator_config: SimulatorConfig | None = None) -> SweepResult:
    """Run the pipeline once per (value, seed) on the simulator backend.

    Each run trains a fresh backend on the world's visible k-shot view and
    reports the final round's query mAP@0.5. Rows come out in (value, seed)
    order.
    """
    if parameter not in _SWEEPABLE:
        raise InvalidConfigError(
            f"sweep parameter must be one of {_SWEEPABLE}, got '{parameter}'")
    base_sim = simulator_config or SimulatorConfig()

    rows = []
    d_fs = world.visible_train
    images = world.train_image_ids()
    for value in values:
        if parameter == "rounds_T":
            value = int(value)
        for seed in seeds:
            cfg = replace(base_cfg, **{parameter: value}, seed=seed)
            backend = SimulatorBackend(world, replace(base_sim, seed=seed))
            _, reports = run_pipeline(d_fs, images, cfg,
                                      query=world.query_gt, backend=backend)
            final_eval = reports[-1].eval_report
            assert final_eval is not None  # query was provided
            rows.append(SweepRow(value, seed, final_eval.map_50))
    return SweepResult(parameter=parameter, rows=tuple(rows))
