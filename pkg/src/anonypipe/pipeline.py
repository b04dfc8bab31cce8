"""Dataset-level runs: detect faces, anonymize a directory tree, compare embeddings."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import anonypipe
from anonypipe.anonymizers import FaceFailure, anonymize_boxes, anonymize_ldfa
from anonypipe.backends import DetectorBackend, EmbedBackend, InpaintBackend, guard, load_backend
from anonypipe.config import RunConfig
from anonypipe.detection import (
    DetectionManifest,
    FaceDetection,
    ManifestEntry,
    count_noa,
    detect_faces,
)
from anonypipe.errors import AnonypipeError, EvaluationError
from anonypipe.imaging import crop, list_images, read_image, write_image
from anonypipe.metrics.embedding import EmbeddingDistanceRecord, embedding_l2

log = logging.getLogger(__name__)

RUN_SCHEMA_VERSION = 1
TIMING_KEYS = frozenset({"seconds", "timings"})

OK, PARTIAL, FAILED = "ok", "partial", "failed"


@dataclass
class ImageRecord:
    image_path: str
    output_path: Optional[str] = None
    status: str = FAILED
    image_w: int = 0
    image_h: int = 0
    detected: list[FaceDetection] = field(default_factory=list)
    anonymized: list[FaceDetection] = field(default_factory=list)
    failures: list[FaceFailure] = field(default_factory=list)
    error: Optional[str] = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        data = {
            "image_path": self.image_path,
            "output_path": self.output_path,
            "status": self.status,
            "faces_detected": len(self.detected),
            "faces_anonymized": len(self.anonymized),
            "failures": [
                {"face_index": f.index, "box": list(f.box.as_tuple()), "reason": f.reason} for f in self.failures
            ],
            "seconds": round(self.seconds, 6),
        }
        if self.error:
            data["error"] = self.error
        return data


@dataclass
class RunResult:
    config: RunConfig
    records: list[ImageRecord]
    capabilities: dict
    seconds: float = 0.0

    @property
    def detections(self) -> DetectionManifest:
        """Faces that were actually anonymized, per processed image."""
        return DetectionManifest(
            [
                ManifestEntry(r.image_path, r.image_w, r.image_h, list(r.anonymized))
                for r in self.records
                if r.status != FAILED
            ]
        )

    @property
    def noa(self) -> int:
        return count_noa(self.detections)

    @property
    def total_detected(self) -> int:
        return sum(len(r.detected) for r in self.records)

    @property
    def ok(self) -> bool:
        return all(r.status == OK for r in self.records)

    def manifest(self) -> dict:
        return {
            "schema_version": RUN_SCHEMA_VERSION,
            "toolkit_version": anonypipe.__version__,
            "config": self.config.snapshot(),
            "backends": self.capabilities,
            "reproducible": all(c.get("deterministic", True) for c in self.capabilities.values()),
            "complete": self.ok,
            "noa": self.noa,
            "faces_detected": self.total_detected,
            "images": [r.to_dict() for r in self.records],
            "detections": self.detections.to_dict(),
            "timings": {"total_seconds": round(self.seconds, 6)},
        }


def canonicalize(manifest):
    """Drop wall-clock fields so two runs can be compared for equality."""
    if isinstance(manifest, dict):
        return {k: canonicalize(v) for k, v in manifest.items() if k not in TIMING_KEYS}
    if isinstance(manifest, list):
        return [canonicalize(v) for v in manifest]
    return manifest


def output_relpath(rel: str, output_format: str = "png") -> str:
    suffix = ".jpg" if output_format == "jpeg" else ".png"
    return str(Path(rel).with_suffix(suffix).as_posix())


def _anonymize_one(
    rel: str,
    cfg: RunConfig,
    detector: DetectorBackend,
    inpainter: Optional[InpaintBackend],
) -> ImageRecord:
    start = time.perf_counter()
    record = ImageRecord(rel)
    try:
        img = read_image(cfg.input_dir / rel)
        record.image_h, record.image_w = img.shape[:2]
        record.detected = detect_faces(img, detector, cfg.threshold, image_id=rel)
        if cfg.method == "ldfa":
            result = anonymize_ldfa(img, record.detected, cfg.method_config, inpainter)
            out, record.anonymized, record.failures = result.image, result.anonymized, result.failures
        else:
            out = anonymize_boxes(img, record.detected, cfg.method, cfg.method_config)
            record.anonymized = list(record.detected)
        out_rel = output_relpath(rel, cfg.output_format)
        write_image(out, cfg.output_dir / out_rel)
        record.output_path = out_rel
        record.status = OK if len(record.anonymized) == len(record.detected) else PARTIAL
    except Exception as exc:  # noqa: BLE001 - recorded per image, reported via exit code
        log.error("%s: %s", rel, exc)
        record.status = FAILED
        record.error = f"{type(exc).__name__}: {exc}"
    record.seconds = time.perf_counter() - start
    return record


def run_anonymization(
    cfg: RunConfig,
    detector: Optional[DetectorBackend] = None,
    inpainter: Optional[InpaintBackend] = None,
) -> RunResult:
    """Anonymize every image under ``cfg.input_dir`` into ``cfg.output_dir``."""
    start = time.perf_counter()
    detector = detector or load_backend("detector", cfg.detector)
    if cfg.method == "ldfa" and inpainter is None:
        inpainter = load_backend("inpainter", cfg.inpainter)
    capabilities = {"detector": detector.capabilities.to_dict()}
    if cfg.method == "ldfa":
        capabilities["inpainter"] = inpainter.capabilities.to_dict()
    detector, inpainter = guard(detector), guard(inpainter)

    if not cfg.input_dir.is_dir():
        raise AnonypipeError(f"input directory {cfg.input_dir} does not exist")
    rels = list_images(cfg.input_dir)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        records = list(pool.map(lambda r: _anonymize_one(r, cfg, detector, inpainter), rels))
    records.sort(key=lambda r: r.image_path)
    return RunResult(cfg, records, capabilities, time.perf_counter() - start)


def run_detection(
    input_dir, detector: DetectorBackend, threshold: float, jobs: int = 1
) -> DetectionManifest:
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise AnonypipeError(f"input directory {input_dir} does not exist")
    detector = guard(detector)

    def one(rel):
        img = read_image(input_dir / rel)
        h, w = img.shape[:2]
        return ManifestEntry(rel, w, h, detect_faces(img, detector, threshold, image_id=rel))

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        entries = list(pool.map(one, list_images(input_dir)))
    return DetectionManifest(entries).sorted()


def find_counterpart(directory: Path, rel: str) -> Optional[Path]:
    """The anonymized file for ``rel``: same relative path, or same stem as PNG/JPEG."""
    exact = directory / rel
    if exact.is_file():
        return exact
    for suffix in (".png", ".jpg", ".jpeg"):
        candidate = (directory / rel).with_suffix(suffix)
        if candidate.is_file():
            return candidate
    return None


def embedding_distances(
    orig_dir, anon_dir, manifest: DetectionManifest, embedder: EmbedBackend
) -> list[EmbeddingDistanceRecord]:
    """Distance between each original face and the same box in the anonymized image."""
    orig_dir, anon_dir = Path(orig_dir), Path(anon_dir)
    missing = [e.image_path for e in manifest.entries if find_counterpart(anon_dir, e.image_path) is None]
    if missing:
        raise EvaluationError(f"no anonymized counterpart for: {missing}")
    records = []
    for entry in manifest.entries:
        if not entry.faces:
            continue
        orig = read_image(orig_dir / entry.image_path)
        anon = read_image(find_counterpart(anon_dir, entry.image_path))
        if orig.shape != anon.shape:
            raise EvaluationError(f"{entry.image_path}: anonymized image has shape {anon.shape}, expected {orig.shape}")
        for i, face in enumerate(entry.faces):
            d = embedding_l2(embedder.embed(crop(orig, face.box)), embedder.embed(crop(anon, face.box)))
            records.append(EmbeddingDistanceRecord(entry.image_path, i, d))
    return records


def align_by_stem(gt: DetectionManifest, pred: DetectionManifest) -> DetectionManifest:
    """Rename ``pred`` entries to ``gt`` paths when they differ only in file suffix."""
    gt_paths = set(gt.paths())
    if gt_paths == set(pred.paths()):
        return pred
    stem = {Path(p).with_suffix("").as_posix(): p for p in gt_paths}
    if len(stem) != len(gt_paths):
        return pred
    renamed = []
    for e in pred.entries:
        target = stem.get(Path(e.image_path).with_suffix("").as_posix())
        if target is None:
            return pred
        renamed.append(ManifestEntry(target, e.image_w, e.image_h, e.faces))
    try:
        return DetectionManifest(renamed)
    except AnonypipeError:
        return pred

