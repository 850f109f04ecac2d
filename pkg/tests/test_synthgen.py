import numpy as np
import pytest

from reglab.core import (
    REFERENCE_DETECTION_COUNTS,
    REFERENCE_SEGMENTATION_COUNTS,
    AnnotationCounts,
    Box,
    GroundTruth,
    Prediction,
    Scene,
    dumps_dataset,
    summarize_counts,
)
from reglab.errors import InfeasibleConfig
from reglab.metrics import map_range
from reglab.synthgen import DetectorQuality, GeneratorConfig, generate, generate_dataset, geometry_from_scene


def _config(**kw):
    base = dict(counts=AnnotationCounts(REFERENCE_DETECTION_COUNTS), scene_count=100, seed=3)
    base.update(kw)
    return GeneratorConfig(**base)


def test_exact_counts_detection():
    assert summarize_counts(generate(_config())) == AnnotationCounts(REFERENCE_DETECTION_COUNTS)


def test_exact_counts_segmentation():
    cfg = _config(counts=AnnotationCounts(REFERENCE_SEGMENTATION_COUNTS), task="segmentation")
    assert summarize_counts(generate(cfg), task="segmentation").total == 1200


def test_deterministic_bytes():
    q = DetectorQuality(2.0, 0.1, 0.1, 0.2)
    a = dumps_dataset(generate_dataset(_config(detector_quality=q)))
    b = dumps_dataset(generate_dataset(_config(detector_quality=q)))
    assert a == b
    assert a != dumps_dataset(generate_dataset(_config(detector_quality=q, seed=4)))


def test_boxes_inside_image():
    for s in generate(_config()):
        for g in s.ground_truth:
            assert 0 <= g.box.x_min < g.box.x_max <= 1280 and 0 <= g.box.y_min < g.box.y_max <= 720


def test_perfect_detector_scores_one():
    small = AnnotationCounts({k: v // 10 for k, v in REFERENCE_DETECTION_COUNTS.items()})
    report = map_range(generate(_config(counts=small, scene_count=20)))
    assert all(v == 1.0 for v in report.macro.as_dict().values())


def test_miss_rate_lowers_recall():
    small = AnnotationCounts({k: v // 5 for k, v in REFERENCE_DETECTION_COUNTS.items()})
    recalls = []
    for miss in (0.0, 0.2, 0.5, 0.8):
        scenes = generate(_config(counts=small, detector_quality=DetectorQuality(miss_rate=miss)))
        recalls.append(map_range(scenes).macro.recall)
    assert all(b < a for a, b in zip(recalls, recalls[1:]))


def test_infeasible_configs():
    with pytest.raises(InfeasibleConfig):
        generate(_config(scene_count=10, max_boxes_per_scene=5))
    with pytest.raises(InfeasibleConfig):
        _config(box_size_range=(10.0, 5000.0))
    with pytest.raises(InfeasibleConfig):
        DetectorQuality(miss_rate=1.5)


def test_geometry_worked_example():
    scene = Scene(
        "g",
        (GroundTruth(Box(0, 0, 2, 2), 0), GroundTruth(Box(6, 4, 8, 6), 1)),
        (Prediction(Box(3, 4, 5, 6), 0, 0.9),),
    )
    d = geometry_from_scene(scene, 3, sentinel=100.0).distances
    # centre (4, 5) against (1, 1) and (7, 5)
    assert d[0, 0] == pytest.approx(5.0)
    assert d[0, 1] == pytest.approx(3.0)
    assert d[0, 2] == 100.0


def test_geometry_default_sentinel():
    scene = Scene("g", (GroundTruth(Box(0, 0, 3, 4), 0),), (Prediction(Box(0, 0, 3, 4), 0, 0.5),))
    assert geometry_from_scene(scene, 2).distances[0, 1] == pytest.approx(5.0)
    assert geometry_from_scene(scene, 2, image_extent=(30, 40)).distances[0, 1] == pytest.approx(50.0)
    assert np.all(geometry_from_scene(Scene("e", (), ()), 2).distances.shape == (0, 2))


def test_geometry_coincident_and_nearest():
    scene = Scene(
        "h",
        (GroundTruth(Box(0, 0, 2, 2), 0), GroundTruth(Box(3, 0, 5, 2), 1), GroundTruth(Box(5, 0, 7, 2), 1)),
        (Prediction(Box(0, 0, 2, 2), 0, 0.5),),
    )
    d = geometry_from_scene(scene, 2).distances
    assert d[0, 0] == 0.0
    assert d[0, 1] == pytest.approx(3.0)
