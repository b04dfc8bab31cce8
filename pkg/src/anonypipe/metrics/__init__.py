"""Evaluation metrics for anonymized datasets."""

from anonypipe.metrics.detection import (
    COCO_IOU_THRESHOLDS,
    DetEvalReport,
    evaluate_detection,
    greedy_match,
    match_and_ap,
)
from anonypipe.metrics.embedding import EmbeddingDistanceRecord, Histogram, embedding_l2, histogram
from anonypipe.metrics.segmentation import (
    SegEvalReport,
    compute_avg_instance_size,
    compute_iiou,
    compute_iou,
    delta_iou_rel,
    evaluate_segmentation,
)

__all__ = [
    "COCO_IOU_THRESHOLDS",
    "DetEvalReport",
    "EmbeddingDistanceRecord",
    "Histogram",
    "SegEvalReport",
    "compute_avg_instance_size",
    "compute_iiou",
    "compute_iou",
    "delta_iou_rel",
    "embedding_l2",
    "evaluate_detection",
    "evaluate_segmentation",
    "greedy_match",
    "histogram",
    "match_and_ap",
]
