"""Command-line interface.

Subcommands: validate, filter, nms, merge, eval, iterate, sweep, simulate.
Exit codes: 0 ok, 1 validation/data error, 2 backend failure, 3 config
error. File formats and the run.toml key set are documented in
docs/format.md.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from ._io import atomic_write_bytes
from .backends import BackendDescriptor, BackendKind
from .box_ops import class_wise_nms, filter_by_score, parse_predictions, serialize_predictions
from .coco import AnnotationSource, load_dataset, serialize_dataset, validate
from .errors import BackendError, DataError, InvalidConfigError, PseudoLoopError
from .evaluation import evaluate
from .merge import CrossRoundBehavior, MergePolicy, merge_datasets, merge_pseudo, to_pseudo_annotations
from .pipeline import PipelineConfig, run_pipeline, sweep
from .simulator import SimulatorConfig, load_world, make_world, save_world

EXIT_OK = 0
EXIT_DATA = 1
EXIT_BACKEND = 2
EXIT_CONFIG = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are config errors (exit 3)
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _emit(data: bytes, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.write(b"\n")
    else:
        atomic_write_bytes(out, data)


def _cmd_validate(args) -> int:
    ds = load_dataset(args.dataset)
    problems = validate(ds)
    for p in problems:
        print(p)
    if problems:
        return EXIT_DATA
    print(f"ok: {len(ds.images)} images, {len(ds.categories)} categories, "
          f"{len(ds.annotations)} annotations")
    return EXIT_OK


def _cmd_filter(args) -> int:
    preds = parse_predictions(Path(args.predictions).read_bytes())
    kept = filter_by_score(preds, args.tau_s)
    _emit(serialize_predictions(kept), args.out)
    print(f"kept {len(kept)}/{len(preds)} detections at tau_s={args.tau_s}",
          file=sys.stderr)
    return EXIT_OK


def _cmd_nms(args) -> int:
    preds = parse_predictions(Path(args.predictions).read_bytes())
    kept = class_wise_nms(preds, args.tau_n)
    _emit(serialize_predictions(kept), args.out)
    print(f"kept {len(kept)}/{len(preds)} detections at tau_n={args.tau_n}",
          file=sys.stderr)
    return EXIT_OK


def _cmd_merge(args) -> int:
    gt = load_dataset(args.gt)
    if args.pred:
        preds = parse_predictions(Path(args.pred).read_bytes())
        policy = MergePolicy(gt_suppression_iou=args.suppression_iou)
        pseudo = to_pseudo_annotations(preds, gt)
        merged = merge_pseudo(gt, pseudo, policy)
        kept = len(merged.annotations) - len(gt.annotations)
        summary = {"kept_pseudo": kept,
                   "dropped_pseudo": len(pseudo) - kept,
                   "gt_count": len(gt.annotations)}
    else:
        other = load_dataset(args.dataset,
                             untagged_source=AnnotationSource.EXTERNAL)
        merged = merge_datasets(gt, other)
        summary = {"kept_pseudo": 0, "dropped_pseudo": 0,
                   "gt_count": len(gt.annotations),
                   "merged_annotations": len(merged.annotations)}
    _emit(serialize_dataset(merged), args.out)
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def _cmd_eval(args) -> int:
    gt = load_dataset(args.gt)
    preds = parse_predictions(Path(args.pred).read_bytes())
    report = evaluate(gt, preds, iou_thresh=args.iou)
    if args.json:
        print(json.dumps(report.to_json_dict(include_pr_curves=args.pr_curves)))
    else:
        print(report.to_text_table())
    return EXIT_OK


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise InvalidConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"bad TOML in {path}: {exc}")


def _pipeline_config(doc: dict) -> PipelineConfig:
    pipe = doc.get("pipeline", {})
    merge_doc = doc.get("merge", {})
    try:
        behavior = CrossRoundBehavior(merge_doc.get("cross_round", "from_scratch"))
    except ValueError:
        raise InvalidConfigError(
            f"merge.cross_round must be one of "
            f"{[b.value for b in CrossRoundBehavior]}")
    policy = MergePolicy(
        gt_suppression_iou=float(merge_doc.get("gt_suppression_iou", 0.5)),
        cross_round_behavior=behavior,
    )
    backend = BackendDescriptor.from_dict(doc.get("backend", {"kind": "simulator"}))
    return PipelineConfig(
        rounds_T=int(pipe.get("rounds", 3)),
        tau_s=float(pipe.get("tau_s", 0.6)),
        tau_n=float(pipe.get("tau_n", 0.5)),
        merge_policy=policy,
        backend=backend,
        eval_each_round=bool(pipe.get("eval_each_round", True)),
        reset_weights_each_round=bool(pipe.get("reset_weights_each_round", False)),
        seed=int(pipe.get("seed", 0)),
        epochs_hint=int(pipe.get("epochs_hint", 50)),
    )


def _cmd_iterate(args) -> int:
    doc = _load_toml(args.config)
    cfg = _pipeline_config(doc)
    data = doc.get("data", {})
    run_doc = doc.get("run", {})
    run_dir = args.run_dir or run_doc.get("dir")

    world = None
    if cfg.backend.kind is BackendKind.SIMULATOR:
        world_dir = cfg.backend.settings.get("world_dir")
        if world_dir:
            world, _ = load_world(world_dir)

    if "train" in data:
        d_fs = load_dataset(data["train"])
    elif world is not None:
        d_fs = world.visible_train
    else:
        raise InvalidConfigError("config needs data.train (or a simulator "
                                 "backend with world_dir)")
    if "query" in data:
        query = load_dataset(data["query"])
    elif world is not None:
        query = world.query_gt
    else:
        query = None
    images = data.get("images") or sorted(d_fs.image_ids())

    final, reports = run_pipeline(d_fs, images, cfg, query=query,
                                  run_dir=run_dir)
    for rep in reports:
        line = (f"round {rep.round_index}: raw={rep.n_raw} "
                f"filtered={rep.n_after_filter} nms={rep.n_after_nms} "
                f"pseudo_kept={rep.n_pseudo_kept}")
        if rep.eval_report is not None:
            line += f" query_map50={rep.eval_report.map_50:.4f}"
        print(line)
    print(f"final training set: {len(final.annotations)} annotations"
          + (f"; artifacts in {run_dir}" if run_dir else ""))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base_cfg = PipelineConfig()
    sim_cfg = None
    if args.config:
        doc = _load_toml(args.config)
        base_cfg = _pipeline_config(doc)
    world, world_cfg = load_world(args.world)
    if world_cfg is not None:
        sim_cfg = world_cfg

    values = []
    for chunk in args.values.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        values.append(int(chunk) if args.param == "rounds_T" else float(chunk))
    if not values:
        raise InvalidConfigError("sweep needs at least one value")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    result = sweep(base_cfg, args.param, values, world, seeds,
                   simulator_config=sim_cfg)
    csv_text = result.to_csv()
    if args.out:
        atomic_write_bytes(args.out, csv_text.encode("utf-8"))
    else:
        sys.stdout.write(csv_text)
    for value, mean in sorted(result.mean_by_value().items()):
        print(f"{args.param}={value}: mean map_50={mean:.4f}", file=sys.stderr)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    world = make_world(
        n_images=args.images,
        n_classes=args.classes,
        instances_per_image=(args.min_instances, args.max_instances),
        k_shot=args.k_shot,
        seed=args.seed,
    )
    cfg = SimulatorConfig(seed=args.seed)
    save_world(world, args.out, cfg=cfg, generation={
        "n_images": args.images,
        "n_classes": args.classes,
        "instances_per_image": [args.min_instances, args.max_instances],
        "k_shot": args.k_shot,
        "seed": args.seed,
    })
    print(f"world written to {args.out}: "
          f"{len(world.hidden_gt.images)} train images "
          f"({len(world.visible_train.annotations)} visible annotations), "
          f"{len(world.query_gt.images)} query images")
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="pseudoloop",
                     description="Iterative pseudo-label self-training toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a COCO JSON file")
    p.add_argument("dataset")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("filter", help="drop detections below a score threshold")
    p.add_argument("predictions")
    p.add_argument("--tau-s", type=float, required=True, dest="tau_s")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("nms", help="class-wise non-maximum suppression")
    p.add_argument("predictions")
    p.add_argument("--tau-n", type=float, required=True, dest="tau_n")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("merge", help="fuse predictions (as pseudo labels) or "
                                     "an external dataset into ground truth")
    p.add_argument("--gt", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pred", help="detection results to convert and merge")
    group.add_argument("--dataset", help="external dataset to fold in")
    p.add_argument("--suppression-iou", type=float, default=0.5)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("eval", help="mAP@0.5 evaluation")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--json", action="store_true")
    p.add_argument("--pr-curves", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("iterate", help="run the self-training loop")
    p.add_argument("--config", required=True, help="run.toml")
    p.add_argument("--run-dir", default=None,
                   help="override run.dir from the config")
    p.set_defaults(func=_cmd_iterate)

    p = sub.add_parser("sweep", help="sweep a loop parameter on a world")
    p.add_argument("--param", required=True,
                   choices=["tau_s", "tau_n", "rounds_T"])
    p.add_argument("--values", required=True,
                   help="comma-separated values")
    p.add_argument("--world", required=True, help="world directory")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="generate a synthetic world directory")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=80)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--min-instances", type=int, default=3)
    p.add_argument("--max-instances", type=int, default=8)
    p.add_argument("--k-shot", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PseudoLoopError as exc:  # fallback for any toolkit error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
