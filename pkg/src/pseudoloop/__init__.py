"""Iterative pseudo-label self-training toolkit for object detection.

Building blocks: a typed COCO-style dataset model (`coco`), box geometry
and prediction post-processing (`box_ops`), an mAP@0.5 evaluator
(`evaluation`), pseudo-label/ground-truth fusion (`merge`), pluggable
detector backends (`backends`), a seeded synthetic detector world
(`simulator`), and the closed-loop driver with sweep support (`pipeline`).
"""

from .backends import (
    BackendDescriptor,
    BackendKind,
    CommandBackend,
    DetectorBackend,
    FileBackend,
    PredictRequest,
    SimulatorBackend,
    TrainRequest,
    build_backend,
)
from .box_ops import (
    Detection,
    PredictionSet,
    class_wise_nms,
    filter_by_score,
    iou,
    iou_matrix,
    parse_predictions,
    serialize_predictions,
)
from .coco import (
    AnnotationRecord,
    AnnotationSource,
    BBox,
    CategoryRecord,
    Dataset,
    ImageRecord,
    Violation,
    load_dataset,
    parse_dataset,
    sample_support,
    save_dataset,
    serialize_dataset,
    validate,
)
from .evaluation import (
    ClassEval,
    EvalReport,
    MatchRecord,
    average_precision,
    evaluate,
    match_detections,
)
from .merge import (
    CrossRoundBehavior,
    MergePolicy,
    merge_datasets,
    merge_pseudo,
    to_pseudo_annotations,
)
from .pipeline import PipelineConfig, RoundReport, SweepResult, run_pipeline, sweep
from .simulator import (
    SimulatorConfig,
    World,
    coverage,
    load_world,
    make_world,
    save_world,
    simulate_predictions,
    supervision_quality,
)

__version__ = "0.1.0"
