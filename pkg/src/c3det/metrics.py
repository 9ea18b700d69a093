"""IoU, per-class average precision, mAP@0.5 and COCO-style AP@[.50:.05:.95]."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Box, Detection, GroundTruthObject

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


class MetricsError(Exception):
    pass


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _sort_by_score(dets: list[Detection]) -> list[Detection]:
    # Stable sort keeps input order for tied scores.
    return sorted(dets, key=lambda d: -d.score)


def _match_single_pool(
    dets: list[Detection], gts: list[GroundTruthObject], iou_thr: float
) -> list[bool]:
    """Greedy TP/FP flags for score-ordered detections against one GT pool.

    A detection is a true positive when its best-IoU unmatched same-class
    ground truth reaches the threshold; each ground truth matches at most
    one detection.
    """
    matched = [False] * len(gts)
    flags: list[bool] = []
    for det in dets:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gts):
            if matched[j] or gt.class_id != det.class_id:
                continue
            v = iou(det.box, gt.box)
            if v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0 and best_iou >= iou_thr:
            matched[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _ap_from_flags(scores: np.ndarray, flags: np.ndarray, num_gt: int) -> float:
    """Area under the all-point interpolated precision-recall curve."""
    if num_gt == 0:
        raise MetricsError("AP undefined for zero ground-truth instances")
    if len(flags) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    flags = flags[order]
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    # Envelope the precision from the right, then integrate over recall steps.
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def average_precision(
    dets: list[Detection], gts: list[GroundTruthObject], iou_thr: float
) -> float:
    """AP for one detection pool (single image or pre-pooled per class)."""
    ordered = _sort_by_score(dets)
    flags = _match_single_pool(ordered, gts, iou_thr)
    num_gt = len(gts)
    if num_gt == 0:
        return 0.0
    return _ap_from_flags(
        np.array([d.score for d in ordered]),
        np.array(flags, dtype=bool),
        num_gt,
    )


@dataclass
class EvalResult:
    """Per-class AP and their mean, at one or more IoU thresholds.

    map_value averages per_class_ap over classes that have at least one
    ground-truth instance; classes with zero instances are excluded and
    listed in skipped_classes. With several thresholds the values are
    additionally averaged over thresholds (COCO convention).
    """

    per_class_ap: dict[int, float]
    map_value: float
    iou_thresholds: tuple[float, ...]
    skipped_classes: tuple[int, ...] = ()
    per_threshold_map: dict[float, float] = field(default_factory=dict)


def map_at(
    dets_by_image: dict[str, list[Detection]],
    gts_by_image: dict[str, list[GroundTruthObject]],
    thresholds: tuple[float, ...] | list[float] = (0.5,),
    num_classes: int | None = None,
) -> EvalResult:
    """Pool detections per class over all images, average AP over classes
    then over thresholds."""
    unknown = set(dets_by_image) - set(gts_by_image)
    if unknown:
        raise MetricsError(f"detections reference unknown image ids: {sorted(unknown)}")

    if num_classes is None:
        ids = [g.class_id for gts in gts_by_image.values() for g in gts]
        ids += [d.class_id for dets in dets_by_image.values() for d in dets]
        num_classes = max(ids) + 1 if ids else 0

    gt_counts = {c: 0 for c in range(num_classes)}
    for gts in gts_by_image.values():
        for g in gts:
            gt_counts[g.class_id] += 1
    active = [c for c in range(num_classes) if gt_counts[c] > 0]
    skipped = tuple(c for c in range(num_classes) if gt_counts[c] == 0)

    per_class_over_thr: dict[int, list[float]] = {c: [] for c in active}
    per_threshold_map: dict[float, float] = {}
    for thr in thresholds:
        # Flags computed per image (matching never crosses images), pooled per class.
        scores: dict[int, list[float]] = {c: [] for c in active}
        flags: dict[int, list[bool]] = {c: [] for c in active}
        for image_id, gts in gts_by_image.items():
            dets = _sort_by_score(dets_by_image.get(image_id, []))
            image_flags = _match_single_pool(dets, gts, thr)
            for det, flag in zip(dets, image_flags):
                if det.class_id in scores:
                    scores[det.class_id].append(det.score)
                    flags[det.class_id].append(flag)
        ap_per_class = {
            c: _ap_from_flags(
                np.array(scores[c]), np.array(flags[c], dtype=bool), gt_counts[c]
            )
            for c in active
        }
        for c in active:
            per_class_over_thr[c].append(ap_per_class[c])
        per_threshold_map[float(thr)] = (
            float(np.mean([ap_per_class[c] for c in active])) if active else 0.0
        )

    per_class_ap = {
        c: float(np.mean(vals)) for c, vals in per_class_over_thr.items()
    }
    map_value = float(np.mean(list(per_class_ap.values()))) if per_class_ap else 0.0
    return EvalResult(
        per_class_ap=per_class_ap,
        map_value=map_value,
        iou_thresholds=tuple(float(t) for t in thresholds),
        skipped_classes=skipped,
        per_threshold_map=per_threshold_map,
    )


def write_eval_csv(path: Path, rows: list[tuple[int, int, str, float]]) -> None:
    """Write (clicks, session, class_id|"mAP", value) rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clicks", "session", "class_id", "value"])
        for clicks, session, label, value in rows:
            writer.writerow([clicks, session, label, f"{value:.10f}"])


__all__ = [
    "COCO_THRESHOLDS",
    "MetricsError",
    "EvalResult",
    "iou",
    "average_precision",
    "map_at",
    "write_eval_csv",
]
