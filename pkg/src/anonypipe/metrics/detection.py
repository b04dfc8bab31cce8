"""Face-detection quality: per-image AP averaged over IoU thresholds and images."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import Optional, Sequence

import numpy as np

from anonypipe.detection import DetectionManifest, FaceDetection, count_noa, decimal, order_faces
from anonypipe.errors import EvaluationError
from anonypipe.imaging import SizeCategory, size_category

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass
class DetEvalReport:
    """mAP over all faces and per size bucket; ``None`` where a bucket has no GT."""

    map_all: Optional[float]
    map_s: Optional[float]
    map_m: Optional[float]
    map_l: Optional[float]
    noa: int
    iou_thresholds: tuple[float, ...] = COCO_IOU_THRESHOLDS
    images_with_gt: int = 0

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None else decimal(v)

        return {
            "schema_version": 1,
            "map": num(self.map_all),
            "map_s": num(self.map_s),
            "map_m": num(self.map_m),
            "map_l": num(self.map_l),
            "noa": self.noa,
            "iou_thresholds": list(self.iou_thresholds),
            "images_with_gt": self.images_with_gt,
        }


def greedy_match(gt: Sequence[FaceDetection], pred: Sequence[FaceDetection], iou_threshold: float) -> list[bool]:
    """Mark each prediction (in the given order) as true or false positive.

    A prediction takes the still-unmatched GT box with the highest IoU, provided
    that IoU reaches ``iou_threshold``; equal IoUs go to the earlier GT.
    """
    taken = [False] * len(gt)
    hits = []
    for p in pred:
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gt):
            if taken[j]:
                continue
            iou = p.box.iou(g.box)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
        hits.append(best >= 0)
    return hits


def match_and_ap(
    gt: Sequence[FaceDetection], pred: Sequence[FaceDetection], iou_threshold: float
) -> Optional[float]:
    """Average precision of ``pred`` against ``gt`` at one IoU threshold.

    Precision/recall points are taken at every distinct confidence level and AP
    is the area under the monotone precision envelope (all-point interpolation).
    Returns ``None`` when there is no ground truth.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    if not gt:
        return None
    if not pred:
        return 0.0
    gt = order_faces(gt)
    pred = order_faces(pred)
    hits = greedy_match(gt, pred, iou_threshold)

    recalls, precisions = [], []
    tp = n = 0
    rank = 0
    for _, group in groupby(pred, key=lambda f: f.confidence):
        size = len(list(group))
        tp += sum(hits[rank : rank + size])
        n += size
        rank += size
        recalls.append(tp / len(gt))
        precisions.append(tp / n)

    envelope = np.maximum.accumulate(np.asarray(precisions)[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recalls]))
    return float(np.sum(steps * envelope))


def _bucket_predictions(gt, pred, bucket: SizeCategory):
    kept = []
    for p in pred:
        best_j, best_iou = -1, 0.0
        for j, g in enumerate(gt):
            iou = p.box.iou(g.box)
            if iou > best_iou:
                best_j, best_iou = j, iou
        category = size_category(gt[best_j].box) if best_j >= 0 else size_category(p.box)
        if category == bucket:
            kept.append(p)
    return kept


def _mean(values) -> Optional[float]:
    values = list(values)
    return float(np.mean(values)) if values else None


def evaluate_detection(
    gt: DetectionManifest,
    pred: DetectionManifest,
    iou_thresholds: Sequence[float] = COCO_IOU_THRESHOLDS,
) -> DetEvalReport:
    gt_by_path, pred_by_path = gt.by_path(), pred.by_path()
    if gt_by_path.keys() != pred_by_path.keys():
        only_gt = sorted(gt_by_path.keys() - pred_by_path.keys())
        only_pred = sorted(pred_by_path.keys() - gt_by_path.keys())
        raise EvaluationError(f"image sets differ: only in gt {only_gt}, only in pred {only_pred}")

    per_bucket: dict[Optional[SizeCategory], list[float]] = {None: [], **{c: [] for c in SizeCategory}}
    images_with_gt = 0
    for path in sorted(gt_by_path):
        g_faces = order_faces(gt_by_path[path].faces)
        p_faces = order_faces(pred_by_path[path].faces)
        if not g_faces:
            continue
        images_with_gt += 1
        per_bucket[None].append(_mean(match_and_ap(g_faces, p_faces, t) for t in iou_thresholds))
        for bucket in SizeCategory:
            g_sub = [g for g in g_faces if g.size_category == bucket]
            if not g_sub:
                continue
            p_sub = _bucket_predictions(g_faces, p_faces, bucket)
            per_bucket[bucket].append(_mean(match_and_ap(g_sub, p_sub, t) for t in iou_thresholds))

    return DetEvalReport(
        map_all=_mean(per_bucket[None]),
        map_s=_mean(per_bucket[SizeCategory.SMALL]),
        map_m=_mean(per_bucket[SizeCategory.MEDIUM]),
        map_l=_mean(per_bucket[SizeCategory.LARGE]),
        noa=count_noa(pred),
        iou_thresholds=tuple(iou_thresholds),
        images_with_gt=images_with_gt,
    )
