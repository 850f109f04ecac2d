"""Synthetic imbalanced detection datasets with a configurable noisy detector.

Ground-truth counts are hit exactly: annotations are dealt round-robin over
scenes in catalog class order. Each ground truth then produces (or fails to
produce) one prediction, and may spawn one uniformly random false positive.
The random stream is consumed in a fixed pattern per ground truth, whatever
the outcome, so two configs that differ only in noise rates share draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AnnotationCounts,
    Box,
    ClassCatalog,
    Dataset,
    GroundTruth,
    Prediction,
    SampleGeometry,
    Scene,
    counts_for_catalog,
)
from .errors import InfeasibleConfig


@dataclass(frozen=True)
class DetectorQuality:
    localization_noise_std: float = 0.0
    confusion_rate: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0

    def __post_init__(self):
        if self.localization_noise_std < 0:
            raise InfeasibleConfig("localization_noise_std must be non-negative")
        for name in ("confusion_rate", "miss_rate", "false_positive_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InfeasibleConfig(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class GeneratorConfig:
    counts: AnnotationCounts
    scene_count: int = 100
    image_extent: tuple[float, float] = (1280.0, 720.0)
    box_size_range: tuple[float, float] = (16.0, 160.0)
    detector_quality: DetectorQuality = field(default_factory=DetectorQuality)
    seed: int = 0
    max_boxes_per_scene: int = 100
    task: str = "detection"

    def __post_init__(self):
        if self.scene_count < 1:
            raise InfeasibleConfig("scene_count must be at least 1")
        w, h = self.image_extent
        lo, hi = self.box_size_range
        if w <= 0 or h <= 0:
            raise InfeasibleConfig("image extent must be positive")
        if not 0 < lo <= hi:
            raise InfeasibleConfig("box_size_range must satisfy 0 < min <= max")
        if hi > min(w, h):
            raise InfeasibleConfig("boxes larger than the image")


def _random_box(rng: np.random.Generator, extent, size_range) -> Box:
    w, h = extent
    bw, bh = rng.uniform(size_range[0], size_range[1], size=2)
    x0 = rng.uniform(0.0, w - bw)
    y0 = rng.uniform(0.0, h - bh)
    return Box(float(x0), float(y0), float(x0 + bw), float(y0 + bh))


def _jitter(box: Box, noise, min_side: float) -> Box:
    x0, y0, x1, y1 = (a + float(n) for a, n in zip(box.as_list(), noise))
    x0, x1 = min(x0, x1), max(x0, x1)
    y0, y1 = min(y0, y1), max(y0, y1)
    if x1 - x0 < min_side:
        cx = 0.5 * (x0 + x1)
        x0, x1 = cx - 0.5 * min_side, cx + 0.5 * min_side
    if y1 - y0 < min_side:
        cy = 0.5 * (y0 + y1)
        y0, y1 = cy - 0.5 * min_side, cy + 0.5 * min_side
    return Box(x0, y0, x1, y1)


def generate(config: GeneratorConfig, catalog: ClassCatalog | None = None) -> tuple[Scene, ...]:
    catalog = catalog or ClassCatalog()
    names = catalog.names(config.task)
    counts = counts_for_catalog(config.counts.per_class, names)
    n_scenes = config.scene_count
    if math.ceil(counts.total / n_scenes) > config.max_boxes_per_scene:
        raise InfeasibleConfig(
            f"{counts.total} annotations do not fit in {n_scenes} scenes of "
            f"at most {config.max_boxes_per_scene} boxes"
        )
    rng = np.random.default_rng(config.seed)
    q = config.detector_quality
    n_classes = len(names)
    min_side = 0.05 * config.box_size_range[0]

    gts: list[list[GroundTruth]] = [[] for _ in range(n_scenes)]
    k = 0
    for class_id, n in enumerate(counts.per_class.values()):
        for _ in range(n):
            gts[k % n_scenes].append(GroundTruth(_random_box(rng, config.image_extent, config.box_size_range), class_id))
            k += 1

    scenes = []
    for s, scene_gts in enumerate(gts):
        preds = []
        for g in scene_gts:
            u_miss, u_conf, u_fp = rng.random(3)
            other = int(rng.integers(0, n_classes - 1)) if n_classes > 1 else 0
            noise = rng.normal(0.0, 1.0, size=4) * q.localization_noise_std
            confidence = float(rng.uniform(0.5, 1.0))
            fp_box = _random_box(rng, config.image_extent, config.box_size_range)
            fp_class = int(rng.integers(0, n_classes))
            fp_conf = float(rng.uniform(0.0, 1.0))
            if u_miss >= q.miss_rate:
                cls = g.class_id
                if n_classes > 1 and u_conf < q.confusion_rate:
                    cls = other if other < g.class_id else other + 1
                preds.append(Prediction(_jitter(g.box, noise, min_side), cls, confidence))
            if u_fp < q.false_positive_rate:
                preds.append(Prediction(fp_box, fp_class, fp_conf))
        scenes.append(Scene(f"scene_{s:05d}", tuple(scene_gts), tuple(preds)))
    return tuple(scenes)


def generate_dataset(config: GeneratorConfig, catalog: ClassCatalog | None = None) -> Dataset:
    catalog = catalog or ClassCatalog()
    return Dataset(generate(config, catalog), catalog, config.task)


def _scene_diagonal(scene: Scene) -> float:
    boxes = [g.box for g in scene.ground_truth] + [p.box for p in scene.predictions]
    if not boxes:
        return 1.0
    w = max(b.x_max for b in boxes) - min(b.x_min for b in boxes)
    h = max(b.y_max for b in boxes) - min(b.y_min for b in boxes)
    return math.hypot(w, h)


def geometry_from_scene(
    scene: Scene,
    n_classes: int,
    sentinel: float | None = None,
    image_extent: tuple[float, float] | None = None,
) -> SampleGeometry:
    """Center-to-center distance from each prediction to the nearest ground
    truth of each class.

    Classes absent from the scene get ``sentinel``; by default the image
    diagonal when ``image_extent`` is known, else the diagonal of the
    rectangle spanned by all boxes in the scene.
    """
    if sentinel is None:
        sentinel = math.hypot(*image_extent) if image_extent else _scene_diagonal(scene)
    d = np.full((len(scene.predictions), n_classes), float(sentinel))
    if not scene.predictions:
        return SampleGeometry(d)
    pc = np.array([p.box.center for p in scene.predictions])
    for c in range(n_classes):
        centers = np.array([g.box.center for g in scene.ground_truth if g.class_id == c])
        if centers.size:
            diff = pc[:, None, :] - centers[None, :, :]
            d[:, c] = np.sqrt((diff**2).sum(axis=-1)).min(axis=1)
    return SampleGeometry(d)
