"""Shared domain types, dataset I/O and annotation counting.

Class indices are the runtime currency; class names only appear when reading
or writing files. Detection and segmentation keep separate catalogs and are
only combined inside the joint loss.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import softmax

from .errors import DimensionMismatch, GeometryError, ParseError, SchemaError

DETECTION_CLASSES = (
    "Pavilions",
    "Pedestrian bridges",
    "Information signs",
    "Single-arm poles",
    "Bus stops",
    "Warning signs",
    "Concrete guardrails",
)
SEGMENTATION_CLASSES = (
    "Pavilions",
    "Pedestrian bridges",
    "Information signs",
    "Warning signs",
    "Concrete guardrails",
)

REFERENCE_DETECTION_COUNTS = {
    "Pavilions": 200,
    "Pedestrian bridges": 100,
    "Information signs": 700,
    "Single-arm poles": 1500,
    "Bus stops": 50,
    "Warning signs": 800,
    "Concrete guardrails": 300,
}
REFERENCE_SEGMENTATION_COUNTS = {
    "Pavilions": 100,
    "Pedestrian bridges": 50,
    "Information signs": 500,
    "Warning signs": 400,
    "Concrete guardrails": 150,
}

TASKS = ("detection", "segmentation")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ClassCatalog:
    detection_classes: tuple[str, ...] = DETECTION_CLASSES
    segmentation_classes: tuple[str, ...] = SEGMENTATION_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "detection_classes", tuple(self.detection_classes))
        object.__setattr__(self, "segmentation_classes", tuple(self.segmentation_classes))
        for names in (self.detection_classes, self.segmentation_classes):
            if len(set(names)) != len(names):
                raise SchemaError(f"duplicate class names in {names}")
        missing = set(self.segmentation_classes) - set(self.detection_classes)
        if missing:
            raise SchemaError(f"segmentation classes not in detection catalog: {sorted(missing)}")

    def names(self, task: str = "detection") -> tuple[str, ...]:
        if task == "detection":
            return self.detection_classes
        if task == "segmentation":
            return self.segmentation_classes
        raise SchemaError(f"unknown task {task!r}")

    def index(self, name: str, task: str = "detection") -> int:
        try:
            return self.names(task).index(name)
        except ValueError:
            raise SchemaError(f"unknown {task} class name {name!r}") from None

    @property
    def total_classes(self) -> int:
        return len(self.detection_classes) + len(self.segmentation_classes)


@dataclass(frozen=True)
class AnnotationCounts:
    per_class: Mapping[str, int]
    total: int = -1

    def __post_init__(self):
        per_class = {str(k): int(v) for k, v in self.per_class.items()}
        for name, v in per_class.items():
            if v < 0:
                raise SchemaError(f"negative count for {name!r}")
        total = sum(per_class.values())
        if self.total not in (-1, total):
            raise SchemaError(f"total {self.total} does not match sum of counts {total}")
        object.__setattr__(self, "per_class", per_class)
        object.__setattr__(self, "total", total)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.per_class)

    def as_array(self) -> np.ndarray:
        return np.array(list(self.per_class.values()), dtype=float)

    def scaled(self, k: int) -> "AnnotationCounts":
        return AnnotationCounts({n: v * k for n, v in self.per_class.items()})

    @property
    def imbalance_ratio(self) -> float:
        v = self.as_array()
        return float(v.max() / v.min())


@dataclass(frozen=True)
class PredictionBatch:
    """Per-sample class probabilities with integer labels.

    ``logits`` is optional; when present ``probs`` must be its row softmax.
    Use :meth:`from_logits` to build a batch that supports gradients.
    """

    probs: np.ndarray
    labels: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        probs = _frozen(self.probs)
        labels = _frozen(self.labels, dtype=np.int64)
        if probs.ndim != 2:
            raise DimensionMismatch(f"probs must be N x C, got shape {probs.shape}")
        if labels.shape != (probs.shape[0],):
            raise DimensionMismatch(f"labels shape {labels.shape} does not match {probs.shape[0]} samples")
        if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
            raise DimensionMismatch("label index out of range")
        if not np.all(np.isfinite(probs)) or probs.min(initial=0.0) < 0 or probs.max(initial=0.0) > 1:
            raise ValueError("probabilities must be finite and lie in [0, 1]")
        if self.logits is not None:
            logits = _frozen(self.logits)
            if logits.shape != probs.shape:
                raise DimensionMismatch("logits and probs shapes differ")
            if not np.allclose(probs, softmax(logits, axis=1), rtol=0, atol=1e-9):
                raise ValueError("probs is not the softmax of logits")
            object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_logits(cls, logits, labels) -> "PredictionBatch":
        logits = np.asarray(logits, dtype=float)
        return cls(probs=softmax(logits, axis=1), labels=labels, logits=logits)

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def onehot(self) -> np.ndarray:
        out = np.zeros(self.probs.shape)
        out[np.arange(self.n_samples), self.labels] = 1.0
        return out


@dataclass(frozen=True)
class SampleGeometry:
    distances: np.ndarray

    def __post_init__(self):
        d = _frozen(self.distances)
        if d.ndim != 2:
            raise DimensionMismatch(f"distances must be N x C, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise GeometryError("distances must be finite and non-negative")
        object.__setattr__(self, "distances", d)

    @classmethod
    def constant(cls, n: int, c: int, value: float = 0.0) -> "SampleGeometry":
        return cls(np.full((n, c), float(value)))


class RefinementDirection(enum.Enum):
    CLOSER_IS_HEAVIER = "closer"
    FARTHER_IS_HEAVIER = "farther"


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 2.0
    beta: float = 1.0
    delta: float = 0.0
    lambda_task: float = 1.0
    sigma_sq: float = 0.0
    refinement_direction: RefinementDirection = RefinementDirection.CLOSER_IS_HEAVIER
    prob_floor: float = 1e-7
    # literal double sum over every class instead of the target class only
    all_class_sum: bool = False

    def __post_init__(self):
        for name in ("gamma", "beta", "delta", "lambda_task", "sigma_sq"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma < 0 or self.delta < 0 or self.lambda_task < 0 or self.sigma_sq < 0:
            raise ValueError("gamma, delta, lambda_task and sigma_sq must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 < self.prob_floor < 0.5:
            raise ValueError("prob_floor must lie in (0, 0.5)")
        if isinstance(self.refinement_direction, str):
            object.__setattr__(self, "refinement_direction", RefinementDirection(self.refinement_direction))


class WeightScheme(enum.Enum):
    UNIFORM = "uniform"
    INVERSE_FREQUENCY = "inverse-frequency"
    INVERSE_FREQUENCY_NORMALIZED = "normalized"
    DUAL_OPTIMIZED = "dual-optimized"


@dataclass(frozen=True)
class ClassWeights:
    alpha: np.ndarray
    scheme: WeightScheme = WeightScheme.UNIFORM
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        alpha = _frozen(self.alpha)
        if alpha.ndim != 1:
            raise DimensionMismatch("alpha must be a vector")
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise ValueError("class weights must be finite and non-negative")
        if self.names is not None and len(self.names) != alpha.size:
            raise DimensionMismatch("names and alpha differ in length")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def uniform(cls, n_classes: int, names=None) -> "ClassWeights":
        return cls(np.ones(n_classes), WeightScheme.UNIFORM, names)

    def as_dict(self) -> dict[str, float]:
        names = self.names or tuple(str(i) for i in range(self.alpha.size))
        return {n: float(a) for n, a in zip(names, self.alpha)}


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box coordinates {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"degenerate box {vals}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class GroundTruth:
    box: Box
    class_id: int


@dataclass(frozen=True)
class Prediction:
    box: Box
    class_id: int
    confidence: float

    def __post_init__(self):
        if not math.isfinite(self.confidence) or not 0.0 <= self.confidence <= 1.0:
            raise SchemaError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Scene:
    scene_id: str
    ground_truth: tuple[GroundTruth, ...] = ()
    predictions: tuple[Prediction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        object.__setattr__(self, "predictions", tuple(self.predictions))

    def validate(self, n_classes: int) -> None:
        for item in (*self.ground_truth, *self.predictions):
            if not 0 <= item.class_id < n_classes:
                raise SchemaError(f"scene {self.scene_id}: class index {item.class_id} out of range")


@dataclass(frozen=True)
class Dataset:
    scenes: tuple[Scene, ...]
    catalog: ClassCatalog = field(default_factory=ClassCatalog)
    task: str = "detection"

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.catalog.names(self.task)


# ---------------------------------------------------------------------------
# I/O


def _reject_constant(token):
    raise ParseError(f"non-finite number {token} is not allowed")


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _require(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _parse_box(raw, where) -> Box:
    if not isinstance(raw, list) or len(raw) != 4 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw
    ):
        raise SchemaError(f"{where}: box must be four numbers")
    return Box(*(float(v) for v in raw))


def parse_dataset(raw, catalog: ClassCatalog | None = None) -> Dataset:
    if not isinstance(raw, dict):
        raise SchemaError("dataset must be a JSON object")
    cat_raw = _require(raw, "catalog", "dataset")
    try:
        file_catalog = ClassCatalog(
            tuple(_require(cat_raw, "detection", "catalog")),
            tuple(_require(cat_raw, "segmentation", "catalog")),
        )
    except TypeError as exc:
        raise SchemaError(f"catalog: {exc}") from exc
    if catalog is not None and catalog != file_catalog:
        raise SchemaError("dataset catalog does not match the expected catalog")
    task = raw.get("task", "detection")
    if task not in TASKS:
        raise SchemaError(f"unknown task {task!r}")
    scenes_raw = _require(raw, "scenes", "dataset")
    if not isinstance(scenes_raw, list):
        raise SchemaError("scenes must be a list")

    scenes = []
    for k, s in enumerate(scenes_raw):
        where = f"scene[{k}]"
        scene_id = _require(s, "scene_id", where)
        if not isinstance(scene_id, str):
            raise SchemaError(f"{where}: scene_id must be a string")
        gts = []
        for j, g in enumerate(_require(s, "ground_truth", where)):
            w = f"{where}.ground_truth[{j}]"
            gts.append(
                GroundTruth(
                    _parse_box(_require(g, "box", w), w),
                    file_catalog.index(_require(g, "class", w), task),
                )
            )
        preds = []
        for j, p in enumerate(_require(s, "predictions", where)):
            w = f"{where}.predictions[{j}]"
            conf = _require(p, "confidence", w)
            if not isinstance(conf, (int, float)) or isinstance(conf, bool):
                raise SchemaError(f"{w}: confidence must be a number")
            preds.append(
                Prediction(
                    _parse_box(_require(p, "box", w), w),
                    file_catalog.index(_require(p, "class", w), task),
                    float(conf),
                )
            )
        scenes.append(Scene(scene_id, tuple(gts), tuple(preds)))
    scenes.sort(key=lambda sc: sc.scene_id)
    return Dataset(tuple(scenes), file_catalog, task)


def load_dataset(path, catalog: ClassCatalog | None = None) -> Dataset:
    """Read and validate a dataset file; scenes come back sorted by ``scene_id``."""
    return parse_dataset(_read_json(path), catalog)


def dataset_to_dict(dataset: Dataset) -> dict:
    names = dataset.class_names
    return {
        "catalog": {
            "detection": list(dataset.catalog.detection_classes),
            "segmentation": list(dataset.catalog.segmentation_classes),
        },
        "task": dataset.task,
        "scenes": [
            {
                "scene_id": s.scene_id,
                "ground_truth": [{"box": g.box.as_list(), "class": names[g.class_id]} for g in s.ground_truth],
                "predictions": [
                    {"box": p.box.as_list(), "class": names[p.class_id], "confidence": p.confidence}
                    for p in s.predictions
                ],
            }
            for s in dataset.scenes
        ],
    }


def dumps_dataset(dataset: Dataset) -> str:
    return json.dumps(dataset_to_dict(dataset), indent=1, allow_nan=False) + "\n"


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(dataset))


def load_counts(path) -> AnnotationCounts:
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise SchemaError("counts file must map class names to integers")
    for name, v in raw.items():
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise SchemaError(f"count for {name!r} must be a non-negative integer")
    return AnnotationCounts(raw)


def summarize_counts(
    scenes: Iterable[Scene], catalog: ClassCatalog | None = None, task: str = "detection"
) -> AnnotationCounts:
    names = (catalog or ClassCatalog()).names(task)
    tally = [0] * len(names)
    for scene in scenes:
        for g in scene.ground_truth:
            tally[g.class_id] += 1
    return AnnotationCounts(dict(zip(names, tally)))


def counts_for_catalog(counts: Mapping[str, int], names: Sequence[str]) -> AnnotationCounts:
    """Reorder a name -> count mapping to catalog order; every class must be present."""
    missing = [n for n in names if n not in counts]
    if missing:
        raise SchemaError(f"counts missing classes: {missing}")
    extra = [n for n in counts if n not in names]
    if extra:
        raise SchemaError(f"counts name unknown classes: {extra}")
    return AnnotationCounts({n: counts[n] for n in names})
