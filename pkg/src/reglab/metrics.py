"""Detection metrics: IoU, greedy matching, precision/recall/F1 and AP.

Matching is greedy by confidence. Predictions of a class are visited in
descending confidence (ties: lower prediction index first) and each claims the
unclaimed same-class ground truth with the highest IoU at or above the
threshold (ties: lower ground-truth index first).

AP is non-interpolated: rank every prediction of a class across all scenes by
confidence, take the precision at the rank of each true positive, and divide
the sum by the number of ground-truth objects. ``interpolated=True`` gives the
all-point interpolated area under the precision/recall curve instead.

Zero denominators give 0 for precision, recall and F1.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import Box, Scene
from .errors import EmptyDataset

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


def iou(a: Box, b: Box) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_ground_truth: tuple[int, ...]
    threshold: float

    def tally(self) -> "ConfusionTally":
        return ConfusionTally(len(self.pairs), len(self.unmatched_predictions), len(self.unmatched_ground_truth))


@dataclass(frozen=True)
class ConfusionTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionTally") -> "ConfusionTally":
        return ConfusionTally(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _ranked_predictions(scene: Scene, class_id: int, min_confidence: float | None = None):
    idx = [
        k
        for k, p in enumerate(scene.predictions)
        if p.class_id == class_id and (min_confidence is None or p.confidence >= min_confidence)
    ]
    return sorted(idx, key=lambda k: (-scene.predictions[k].confidence, k))


def match_scene(scene: Scene, class_id: int, threshold: float, min_confidence: float | None = None) -> MatchResult:
    if not 0 < threshold <= 1:
        raise ValueError("IoU threshold must lie in (0, 1]")
    gt_idx = [k for k, g in enumerate(scene.ground_truth) if g.class_id == class_id]
    claimed: set[int] = set()
    pairs = []
    unmatched = []
    for k in _ranked_predictions(scene, class_id, min_confidence):
        box = scene.predictions[k].box
        best, best_iou = None, -1.0
        for j in gt_idx:
            if j in claimed:
                continue
            v = iou(box, scene.ground_truth[j].box)
            if v >= threshold and v > best_iou:
                best, best_iou = j, v
        if best is None:
            unmatched.append(k)
        else:
            claimed.add(best)
            pairs.append((k, best, best_iou))
    return MatchResult(
        tuple(pairs),
        tuple(sorted(unmatched)),
        tuple(j for j in gt_idx if j not in claimed),
        threshold,
    )


def optimal_tp_count(scene: Scene, class_id: int, threshold: float) -> int:
    """Maximum number of prediction/ground-truth pairs with IoU >= threshold."""
    preds = [p for p in scene.predictions if p.class_id == class_id]
    gts = [g for g in scene.ground_truth if g.class_id == class_id]
    if not preds or not gts:
        return 0
    adj = np.array([[iou(p.box, g.box) >= threshold for g in gts] for p in preds], dtype=np.int8)
    matching = maximum_bipartite_matching(csr_matrix(adj), perm_type="column")
    return int((matching >= 0).sum())


def precision_recall_f1(tally: ConfusionTally) -> tuple[float, float, float]:
    tp, fp, fn = tally.tp, tally.fp, tally.fn
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _ranked_outcomes(scenes, class_id: int, threshold: float):
    """(is_tp list in global confidence order, number of ground truths)."""
    rows = []
    n_gt = 0
    for scene in scenes:
        m = match_scene(scene, class_id, threshold)
        n_gt += len(m.pairs) + len(m.unmatched_ground_truth)
        tp_idx = {k for k, _, _ in m.pairs}
        for k, p in enumerate(scene.predictions):
            if p.class_id == class_id:
                rows.append((-p.confidence, scene.scene_id, k, k in tp_idx))
    rows.sort(key=lambda r: r[:3])
    return [r[3] for r in rows], n_gt


def _ap_from_outcomes(outcomes, n_gt: int, interpolated: bool) -> float:
    if n_gt == 0:
        return 0.0
    hits = np.asarray(outcomes, dtype=bool)
    if not hits.any():
        return 0.0
    tp_cum = np.cumsum(hits)
    precision = tp_cum / np.arange(1, hits.size + 1)
    if not interpolated:
        return float(precision[hits].sum() / n_gt)
    recall = tp_cum / n_gt
    # all-point interpolation: precision envelope, summed over recall steps
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]).sum())


def _sorted_scenes(scene_set) -> list[Scene]:
    return sorted(scene_set, key=lambda s: s.scene_id)


def average_precision(scene_set, class_id: int, threshold: float, interpolated: bool = False) -> float:
    if not 0 < threshold <= 1:
        raise ValueError("IoU threshold must lie in (0, 1]")
    outcomes, n_gt = _ranked_outcomes(_sorted_scenes(scene_set), class_id, threshold)
    return _ap_from_outcomes(outcomes, n_gt, interpolated)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    ap50: float
    ap50_95: float

    def as_dict(self) -> dict[str, float]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "ap50": self.ap50,
            "ap50_95": self.ap50_95,
        }


@dataclass(frozen=True)
class MetricReport:
    per_class: dict[int, ClassMetrics]
    macro: ClassMetrics
    # class -> (greedy TP, maximum TP) at IoU 0.5, only filled in verbose mode
    tp_counts: dict[int, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self, class_names=None) -> dict:
        name = (lambda c: class_names[c]) if class_names else str
        out = {
            "per_class": {name(c): m.as_dict() for c, m in self.per_class.items()},
            "macro": self.macro.as_dict(),
        }
        if self.tp_counts:
            out["tp_counts"] = {name(c): {"greedy": g, "optimal": o} for c, (g, o) in self.tp_counts.items()}
        return out


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("REGLAB_THREADS", "1")))
    except ValueError:
        return 1


def _class_metrics(scenes, class_id: int, min_confidence, interpolated, pr_threshold) -> ClassMetrics:
    tally = ConfusionTally()
    for scene in scenes:
        tally = tally + match_scene(scene, class_id, pr_threshold, min_confidence).tally()
    p, r, f1 = precision_recall_f1(tally)
    aps = []
    for th in COCO_THRESHOLDS:
        outcomes, n_gt = _ranked_outcomes(scenes, class_id, th)
        aps.append(_ap_from_outcomes(outcomes, n_gt, interpolated))
    return ClassMetrics(p, r, f1, aps[0], float(np.mean(aps)))


def map_range(
    scene_set,
    min_confidence: float | None = None,
    interpolated: bool = False,
    verbose: bool = False,
    pr_threshold: float = 0.5,
) -> MetricReport:
    """Per-class and macro metrics. AP50 at IoU 0.5, AP50-95 averaged over
    0.50:0.05:0.95; P/R/F1 at IoU ``pr_threshold`` over predictions with confidence at
    least ``min_confidence`` (all predictions by default). Classes without
    ground truth are left out of both ``per_class`` and the macro average."""
    scenes = _sorted_scenes(scene_set)
    if not scenes:
        raise EmptyDataset("no scenes to evaluate")
    classes = sorted({g.class_id for s in scenes for g in s.ground_truth})
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(lambda c: _class_metrics(scenes, c, min_confidence, interpolated, pr_threshold), classes))
    per_class = dict(zip(classes, results))
    if per_class:
        arr = np.array([list(m.as_dict().values()) for m in results])
        macro = ClassMetrics(*(float(v) for v in arr.mean(axis=0)))
    else:
        macro = ClassMetrics(0.0, 0.0, 0.0, 0.0, 0.0)
    tp_counts = {}
    if verbose:
        for c in classes:
            greedy = sum(len(match_scene(s, c, 0.5).pairs) for s in scenes)
            tp_counts[c] = (greedy, sum(optimal_tp_count(s, c, 0.5) for s in scenes))
    return MetricReport(per_class, macro, tp_counts)


TABLE_COLUMNS = ("mAP50", "mAP50-95", "Precision", "Recall", "F1-score")


def format_metric_table(report_dict: dict) -> str:
    """Plain-text table in percent, one row per class plus the macro row."""
    rows = [(name, m) for name, m in report_dict["per_class"].items()]
    rows.append(("all", report_dict["macro"]))
    width = max(len("Class"), *(len(r[0]) for r in rows))
    header = "Class".ljust(width) + "".join(f"  {c:>9}" for c in TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for name, m in rows:
        vals = (m["ap50"], m["ap50_95"], m["precision"], m["recall"], m["f1"])
        lines.append(name.ljust(width) + "".join(f"  {100 * v:>9.2f}" for v in vals))
    return "\n".join(lines)
