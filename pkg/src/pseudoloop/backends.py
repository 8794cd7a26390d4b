"""Pluggable detector backends.

The driver talks to a detector through two calls: train on an annotation
set, then predict on a list of images. Three implementations ship:

* ``CommandBackend`` runs an external command per phase, exchanging data
  through JSON files (any detector in any runtime can plug in);
* ``FileBackend`` replays pre-computed prediction files, one per round;
* ``SimulatorBackend`` wraps the built-in synthetic detector.

Backends return raw predictions: score filtering and NMS belong to the
driver. A backend instance is single-client; the driver serializes calls.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from ._io import atomic_write_bytes, compact_json_bytes
from .box_ops import PredictionSet, parse_predictions
from .coco import Dataset, serialize_dataset
from .errors import (
    BackendFailureError,
    BackendTimeoutError,
    InvalidConfigError,
    MissingPredictionFileError,
    UnresolvableReferenceError,
)
from .simulator import (
    SimulatorConfig,
    World,
    load_world,
    simulate_predictions,
    supervision_quality,
)

__all__ = [
    "BackendDescriptor",
    "BackendKind",
    "CommandBackend",
    "DetectorBackend",
    "FileBackend",
    "PredictRequest",
    "SimulatorBackend",
    "TrainRequest",
    "build_backend",
]

DEFAULT_TIMEOUT_S = 24 * 3600.0


@dataclass(frozen=True)
class TrainRequest:
    train_annotations: Dataset
    epochs_hint: int = 50  # advisory; real backends may ignore it
    reset_weights: bool = False


@dataclass(frozen=True)
class PredictRequest:
    image_ids: tuple[int, ...]


class BackendKind(str, Enum):
    COMMAND = "command"
    FILE = "file"
    SIMULATOR = "simulator"


@dataclass(frozen=True)
class BackendDescriptor:
    """Serializable recipe for constructing a backend."""

    kind: BackendKind
    settings: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "BackendDescriptor":
        if "kind" not in doc:
            raise InvalidConfigError("backend config needs a 'kind'")
        try:
            kind = BackendKind(doc["kind"])
        except ValueError:
            raise InvalidConfigError(f"unknown backend kind '{doc['kind']}'")
        settings = {k: v for k, v in doc.items() if k != "kind"}
        return cls(kind=kind, settings=settings)


class DetectorBackend(ABC):
    """One detector instance across the rounds of a pipeline run."""

    def __init__(self):
        self.round = 0

    @abstractmethod
    def train(self, request: TrainRequest) -> None:
        """Fine-tune on exactly the given annotations; advances the round."""

    @abstractmethod
    def predict(self, request: PredictRequest) -> PredictionSet:
        """Raw detections for the requested image ids only."""


class FileBackend(DetectorBackend):
    """Serves predictions from pre-computed files; training is a no-op.

    ``path_pattern`` must contain a ``{round}`` placeholder, e.g.
    ``runs/demo/round_{round}/raw_preds.json``.
    """

    def __init__(self, path_pattern: str):
        super().__init__()
        self.path_pattern = str(path_pattern)

    def train(self, request: TrainRequest) -> None:
        self.round += 1

    def predict(self, request: PredictRequest) -> PredictionSet:
        path = Path(self.path_pattern.format(round=self.round))
        if not path.exists():
            raise MissingPredictionFileError(
                f"no prediction file for round {self.round}: {path}")
        preds = parse_predictions(path.read_bytes(), default_round=self.round)
        return replace(preds.for_image_ids(request.image_ids), round=self.round)


class SimulatorBackend(DetectorBackend):
    """Synthetic detector whose skill tracks the supervision quality of its
    training annotations against the hidden world."""

    def __init__(self, world: World, config: SimulatorConfig | None = None):
        super().__init__()
        self.world = world
        self.config = config or SimulatorConfig()
        self.quality: dict[int, float] | None = None

    def train(self, request: TrainRequest) -> None:
        self.quality = supervision_quality(request.train_annotations,
                                           self.world.hidden_gt)
        self.round += 1

    def predict(self, request: PredictRequest) -> PredictionSet:
        if self.quality is None:
            raise BackendFailureError("simulator backend was never trained")
        known = set(self.world.hidden_gt.image_ids()) \
            | set(self.world.query_gt.image_ids())
        unknown = [i for i in request.image_ids if i not in known]
        if unknown:
            raise UnresolvableReferenceError(
                f"requested images outside the world: {unknown}")
        return simulate_predictions(self.world, self.quality, self.config,
                                    list(request.image_ids), self.round)


class CommandBackend(DetectorBackend):
    """Runs an external detector through two command templates.

    Placeholders (documented in docs/format.md): ``{train_json}``,
    ``{pred_json}``, ``{image_list}``, ``{workdir}``, ``{round}``,
    ``{epochs}``, ``{reset}``. Each invocation must exit 0; the predict
    command must write ``{pred_json}`` in the detection results format.
    All inputs travel through files named in the substituted command, so
    invocations are hermetic.
    """

    def __init__(self, train_command: str, predict_command: str,
                 workdir: str | None = None,
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        super().__init__()
        if not train_command or not predict_command:
            raise InvalidConfigError(
                "command backend needs 'train' and 'predict' templates")
        self.train_command = train_command
        self.predict_command = predict_command
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="pseudoloop_backend_")
            workdir = self._tmp.name
        self.workdir = Path(workdir)
        self.timeout_s = timeout_s
        self._train_json: Path | None = None

    def _run(self, template: str, subst: dict) -> None:
        try:
            command = template.format(**subst)
        except KeyError as exc:
            raise InvalidConfigError(f"unknown placeholder in command: {exc}")
        argv = shlex.split(command)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            raise BackendTimeoutError(
                f"command exceeded {self.timeout_s:.0f}s: {command}")
        except OSError as exc:
            raise BackendFailureError(f"could not launch '{argv[0]}': {exc}")
        if proc.returncode != 0:
            raise BackendFailureError("backend command failed",
                                      exit_code=proc.returncode,
                                      stderr=proc.stderr[-2000:])

    def train(self, request: TrainRequest) -> None:
        self.round += 1
        round_dir = self.workdir / f"round_{self.round}"
        round_dir.mkdir(parents=True, exist_ok=True)
        self._train_json = round_dir / "train.json"
        atomic_write_bytes(self._train_json,
                           serialize_dataset(request.train_annotations))
        self._run(self.train_command, {
            "train_json": self._train_json,
            "workdir": self.workdir,
            "round": self.round,
            "epochs": request.epochs_hint,
            "reset": int(request.reset_weights),
        })

    def predict(self, request: PredictRequest) -> PredictionSet:
        if self._train_json is None:
            raise BackendFailureError("command backend was never trained")
        round_dir = self.workdir / f"round_{self.round}"
        image_list = round_dir / "images.json"
        pred_json = round_dir / "predictions.json"
        atomic_write_bytes(image_list,
                           compact_json_bytes(list(request.image_ids)))
        self._run(self.predict_command, {
            "train_json": self._train_json,
            "pred_json": pred_json,
            "image_list": image_list,
            "workdir": self.workdir,
            "round": self.round,
        })
        if not pred_json.exists():
            raise BackendFailureError(
                f"predict command did not write {pred_json}")
        preds = parse_predictions(pred_json.read_bytes(),
                                  default_round=self.round)
        return replace(preds.for_image_ids(request.image_ids),
                       round=self.round)


def build_backend(descriptor: BackendDescriptor,
                  world: World | None = None) -> DetectorBackend:
    """Construct a backend from its descriptor.

    For the simulator kind, a ``World`` may be passed directly (sweeps do
    this) or named via a ``world_dir`` setting; an explicit ``config``
    mapping in the settings overrides the world directory's config.json.
    """
    settings = dict(descriptor.settings)
    if descriptor.kind is BackendKind.FILE:
        pattern = settings.get("pattern")
        if not pattern:
            raise InvalidConfigError("file backend needs a 'pattern' setting")
        return FileBackend(pattern)
    if descriptor.kind is BackendKind.COMMAND:
        return CommandBackend(
            train_command=settings.get("train", ""),
            predict_command=settings.get("predict", ""),
            workdir=settings.get("workdir"),
            timeout_s=float(settings.get("timeout_s", DEFAULT_TIMEOUT_S)),
        )
    # simulator
    cfg = None
    if world is None:
        world_dir = settings.get("world_dir")
        if not world_dir:
            raise InvalidConfigError(
                "simulator backend needs a world (world_dir setting)")
        world, cfg = load_world(world_dir)
    if "config" in settings:
        cfg = SimulatorConfig.from_json_dict(dict(settings["config"]))
    return SimulatorBackend(world, cfg)
