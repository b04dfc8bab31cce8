"""Face detections, the per-dataset detection manifest and the detection stage."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np

from anonypipe.errors import DetectionError, InvalidGeometryError, ManifestError
from anonypipe.imaging import BoundingBox, SizeCategory, size_category

if TYPE_CHECKING:
    from anonypipe.backends import DetectorBackend

SCHEMA_VERSION = 1
DEFAULT_THRESHOLD = 0.4


@dataclass(frozen=True)
class FaceDetection:
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence!r}")
        object.__setattr__(self, "confidence", conf)

    @property
    def size_category(self) -> SizeCategory:
        return size_category(self.box)

    def sort_key(self) -> tuple[float, int, int]:
        return (-self.confidence, self.box.y0, self.box.x0)

    def to_dict(self) -> dict:
        return {
            "box": list(self.box.as_tuple()),
            "confidence": _Decimal(self.confidence),
            "size_category": self.size_category.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FaceDetection":
        try:
            face = cls(BoundingBox.from_sequence(data["box"]), data["confidence"])
        except KeyError as exc:
            raise ManifestError(f"face record missing field {exc}") from None
        stored = data.get("size_category")
        if stored is not None and stored != face.size_category.value:
            raise ManifestError(
                f"size_category {stored!r} inconsistent with box {face.box.as_tuple()} "
                f"(area {face.box.area})"
            )
        return face


def order_faces(faces: Iterable[FaceDetection]) -> list[FaceDetection]:
    """Sort by confidence descending, then top-to-bottom, then left-to-right."""
    return sorted(faces, key=FaceDetection.sort_key)


@dataclass
class ManifestEntry:
    image_path: str
    image_w: int
    image_h: int
    faces: list[FaceDetection] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "image_path": self.image_path,
            "image_w": self.image_w,
            "image_h": self.image_h,
            "faces": [f.to_dict() for f in self.faces],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManifestEntry":
        try:
            return cls(
                image_path=str(data["image_path"]),
                image_w=int(data["image_w"]),
                image_h=int(data["image_h"]),
                faces=[FaceDetection.from_dict(f) for f in data["faces"]],
            )
        except KeyError as exc:
            raise ManifestError(f"manifest entry missing field {exc}") from None


@dataclass
class DetectionManifest:
    """Detected faces for every image of a dataset, keyed by relative image path."""

    entries: list[ManifestEntry] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        seen = set()
        for entry in self.entries:
            if entry.image_path in seen:
                raise ManifestError(f"duplicate image path {entry.image_path!r}")
            seen.add(entry.image_path)
            for face in entry.faces:
                if not face.box.fits(entry.image_w, entry.image_h):
                    raise ManifestError(
                        f"face box {face.box.as_tuple()} outside {entry.image_path!r} "
                        f"({entry.image_w}x{entry.image_h})"
                    )

    def by_path(self) -> dict[str, ManifestEntry]:
        return {e.image_path: e for e in self.entries}

    def paths(self) -> list[str]:
        return [e.image_path for e in self.entries]

    def sorted(self) -> "DetectionManifest":
        return DetectionManifest(sorted(self.entries, key=lambda e: e.image_path), self.schema_version)

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, data: dict) -> "DetectionManifest":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported schema_version {version!r}")
        if not isinstance(data.get("entries"), list):
            raise ManifestError("manifest has no 'entries' list")
        try:
            entries = [ManifestEntry.from_dict(e) for e in data["entries"]]
        except (InvalidGeometryError, TypeError, ValueError) as exc:
            if isinstance(exc, ManifestError):
                raise
            raise ManifestError(str(exc)) from exc
        return cls(entries, version)

    def dumps(self) -> str:
        return dumps_json(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "DetectionManifest":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DetectionManifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def count_noa(manifest: DetectionManifest) -> int:
    return sum(len(e.faces) for e in manifest.entries)


def detect_faces(
    img: np.ndarray,
    backend: "DetectorBackend",
    threshold: float = DEFAULT_THRESHOLD,
    image_id: Optional[str] = None,
) -> list[FaceDetection]:
    """Run the detector and keep faces scoring at least ``threshold``.

    Boxes reaching past the image border are clipped rather than dropped; a box
    lying entirely outside the image is discarded.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    h, w = img.shape[:2]
    try:
        raw = backend.detect(img, image_id=image_id)
    except Exception as exc:
        raise DetectionError(image_id, exc) from exc
    kept = []
    for face in raw:
        if face.confidence < threshold:
            continue
        box = face.box.clip(w, h)
        if box is not None:
            kept.append(FaceDetection(box, face.confidence))
    return order_faces(kept)


# JSON output: confidences need at least four fractional digits, which the json
# module cannot express, so they are emitted as placeholders and spliced in.

class _Decimal(float):
    pass


_PLACEHOLDER = re.compile(r'"@@num:([^"@]+)@@"')


def format_decimal(value: float, min_digits: int = 4) -> str:
    """Shortest fixed-point form with >= ``min_digits`` decimals that round-trips."""
    for digits in range(min_digits, 18):
        text = f"{value:.{digits}f}"
        if float(text) == value:
            return text
    return repr(float(value))


def _encode(obj):
    if isinstance(obj, _Decimal):
        return "@@num:" + format_decimal(obj) + "@@"
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def dumps_json(data) -> str:
    text = json.dumps(_encode(data), indent=2, ensure_ascii=False, allow_nan=False)
    return _PLACEHOLDER.sub(r"\1", text) + "\n"


def decimal(value: float) -> float:
    """Mark a float for fixed-point output by :func:`dumps_json`."""
    return _Decimal(value)


def manifest_from_faces(records: Sequence[tuple[str, int, int, Sequence[FaceDetection]]]) -> DetectionManifest:
    return DetectionManifest([ManifestEntry(p, w, h, list(fs)) for p, w, h, fs in records]).sorted()
