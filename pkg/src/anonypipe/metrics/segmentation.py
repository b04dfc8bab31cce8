"""Semantic-segmentation scores: IoU, instance-weighted iIoU and relative IoU change.

Ground-truth instance rasters follow the Cityscapes ``instanceIds`` encoding: a
pixel belonging to instance ``k`` of class ``c`` stores ``c * 1000 + k``, while
pixels of classes without instances store the bare class id.

Wherever a ``class_id`` is accepted, a collection of ids may be given instead to
score a category (e.g. person and rider together).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, Iterable, Optional, Union

import numpy as np

from anonypipe.detection import decimal
from anonypipe.errors import EvaluationError, UndefinedMetricError

ClassSpec = Union[int, Collection[int]]
INSTANCE_OFFSET = 1000


def _ids(class_id: ClassSpec) -> np.ndarray:
    if isinstance(class_id, (int, np.integer)):
        return np.array([int(class_id)])
    return np.array(sorted(int(c) for c in class_id))


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise EvaluationError(f"raster shapes differ: {a.shape} vs {b.shape}")


def decode_instances(gt_instances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split an instanceIds raster into (class raster, instance raster; 0 = none)."""
    raster = np.asarray(gt_instances, dtype=np.int64)
    if np.any(raster < 0):
        raise EvaluationError("instance raster holds negative ids")
    is_instance = raster >= INSTANCE_OFFSET
    classes = np.where(is_instance, raster // INSTANCE_OFFSET, raster)
    instances = np.where(is_instance, raster, 0)
    return classes, instances


@dataclass
class IouCounts:
    tp: float = 0.0
    fp: float = 0.0
    fn: float = 0.0

    def __iadd__(self, other: "IouCounts") -> "IouCounts":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    def ratio(self) -> Optional[float]:
        denom = self.tp + self.fp + self.fn
        return None if denom == 0 else self.tp / denom


def iou_counts(gt_mask: np.ndarray, pred_mask: np.ndarray, class_id: ClassSpec) -> IouCounts:
    gt_mask, pred_mask = np.asarray(gt_mask), np.asarray(pred_mask)
    _same_shape(gt_mask, pred_mask)
    ids = _ids(class_id)
    g = np.isin(gt_mask, ids)
    p = np.isin(pred_mask, ids)
    return IouCounts(float(np.sum(g & p)), float(np.sum(~g & p)), float(np.sum(g & ~p)))


def compute_iou(gt_mask: np.ndarray, pred_mask: np.ndarray, class_id: ClassSpec) -> Optional[float]:
    """TP / (TP + FP + FN) for one class; ``None`` if the class appears in neither mask."""
    return iou_counts(gt_mask, pred_mask, class_id).ratio()


def instance_sizes(gt_instances: np.ndarray, class_id: ClassSpec) -> dict[int, int]:
    classes, instances = decode_instances(gt_instances)
    selected = np.isin(classes, _ids(class_id)) & (instances > 0)
    ids, counts = np.unique(instances[selected], return_counts=True)
    return dict(zip(ids.tolist(), counts.tolist()))


def compute_avg_instance_size(gt_dataset: Iterable[np.ndarray], class_id: ClassSpec) -> float:
    """Mean pixel count of the class's instances over a whole ground-truth set."""
    sizes = []
    for raster in gt_dataset:
        sizes.extend(instance_sizes(raster, class_id).values())
    if not sizes:
        raise EvaluationError(f"class {class_id} has no instances in the dataset")
    return float(np.mean(sizes))


def iiou_counts(
    gt_instances: np.ndarray, pred_mask: np.ndarray, class_id: ClassSpec, avg_instance_size: float
) -> IouCounts:
    if not avg_instance_size > 0:
        raise ValueError(f"avg_instance_size must be > 0, got {avg_instance_size}")
    gt_instances, pred_mask = np.asarray(gt_instances), np.asarray(pred_mask)
    _same_shape(gt_instances, pred_mask)
    classes, instances = decode_instances(gt_instances)
    ids = _ids(class_id)
    g = np.isin(classes, ids)
    p = np.isin(pred_mask, ids)
    if np.any(g & (instances == 0)):
        raise EvaluationError(f"pixels of class {class_id} carry no instance id")

    inst_ids, inverse, counts = np.unique(instances[g], return_inverse=True, return_counts=True)
    weights = avg_instance_size / counts[inverse]
    hit = p[g]
    return IouCounts(
        tp=float(np.sum(weights[hit])),
        fp=float(np.sum(~g & p)),
        fn=float(np.sum(weights[~hit])),
    )


def compute_iiou(
    gt_instances: np.ndarray, pred_mask: np.ndarray, class_id: ClassSpec, avg_instance_size: float
) -> Optional[float]:
    """iTP / (iTP + FP + iFN), ground-truth pixels weighted by avg size / own instance size."""
    return iiou_counts(gt_instances, pred_mask, class_id, avg_instance_size).ratio()


def delta_iou_rel(iou_anon: float, iou_base: float) -> float:
    if iou_base == 0:
        raise UndefinedMetricError("relative IoU change is undefined for a zero baseline")
    return (iou_anon - iou_base) / iou_base


@dataclass
class ClassScores:
    iou: Optional[float]
    iiou: Optional[float] = None
    delta_iou_rel: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: (None if v is None else decimal(v)) for k, v in vars(self).items()}


@dataclass
class SegEvalReport:
    classes: dict[str, ClassScores] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema_version": 1, "classes": {k: v.to_dict() for k, v in self.classes.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "SegEvalReport":
        if data.get("schema_version") != 1 or "classes" not in data:
            raise EvaluationError("not a segmentation report (schema_version 1)")
        return cls({k: ClassScores(**v) for k, v in data["classes"].items()})


def evaluate_segmentation(
    pairs: Iterable[tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]],
    classes: dict[str, ClassSpec],
    baseline: Optional[SegEvalReport] = None,
) -> SegEvalReport:
    """Dataset-level scores from ``(gt_labels, pred_labels, gt_instances)`` triples.

    Counts are summed over all images before dividing. iIoU is reported for a
    class only if every triple carries an instance raster and the class has
    instances somewhere in the set.
    """
    pairs = list(pairs)
    have_instances = bool(pairs) and all(inst is not None for _, _, inst in pairs)
    report = SegEvalReport()
    for name, spec in classes.items():
        total = IouCounts()
        for gt, pred, _ in pairs:
            total += iou_counts(gt, pred, spec)
        scores = ClassScores(iou=total.ratio())

        if have_instances:
            sizes = [s for _, _, inst in pairs for s in instance_sizes(inst, spec).values()]
            if sizes:
                avg = float(np.mean(sizes))
                weighted = IouCounts()
                for _, pred, inst in pairs:
                    weighted += iiou_counts(inst, pred, spec, avg)
                scores.iiou = weighted.ratio()

        if baseline is not None and name in baseline.classes:
            base = baseline.classes[name].iou
            if base and scores.iou is not None:
                scores.delta_iou_rel = delta_iou_rel(scores.iou, base)
        report.classes[name] = scores
    return report
