"""Raster and bounding-box primitives.

Images are plain numpy arrays of shape ``(height, width, 3)`` and dtype ``uint8``.
Boxes are half-open integer rectangles ``[x0, x1) x [y0, y1)``, so ``area`` is
``width * height`` and a crop of box ``b`` has exactly ``b.width`` columns.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from PIL import Image

from anonypipe.errors import InvalidGeometryError

ImageBuffer = np.ndarray

SMALL_AREA_LIMIT = 32 * 32
LARGE_AREA_LIMIT = 96 * 96


class SizeCategory(str, enum.Enum):
    SMALL = "S"
    MEDIUM = "M"
    LARGE = "L"


@dataclass(frozen=True)
class BoundingBox:
    """Integer pixel rectangle, inclusive top-left and exclusive bottom-right."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidGeometryError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise InvalidGeometryError(f"degenerate box {self.as_tuple()}")

    @classmethod
    def from_sequence(cls, values: Sequence[int]) -> "BoundingBox":
        if len(values) != 4:
            raise InvalidGeometryError(f"expected [x0, y0, x1, y1], got {values!r}")
        return cls(*values)

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def as_slices(self) -> tuple[slice, slice]:
        """Row and column slices for indexing an ``(H, W, ...)`` array."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x0 <= other.x0 and self.y0 <= other.y0 and other.x1 <= self.x1 and other.y1 <= self.y1
        )

    def fits(self, image_w: int, image_h: int) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= image_w and self.y1 <= image_h

    def intersection_area(self, other: "BoundingBox") -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        return w * h if w > 0 and h > 0 else 0

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        if inter == 0:
            return 0.0
        return inter / (self.area + other.area - inter)

    def clip(self, image_w: int, image_h: int) -> "BoundingBox | None":
        """Intersect with the image rectangle; ``None`` if nothing is left."""
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, image_w), min(self.y1, image_h)
        if x0 >= x1 or y0 >= y1:
            return None
        return BoundingBox(x0, y0, x1, y1)

    def translate(self, dx: int, dy: int) -> "BoundingBox":
        return BoundingBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)


def size_category(box: BoundingBox) -> SizeCategory:
    area = box.area
    if area < SMALL_AREA_LIMIT:
        return SizeCategory.SMALL
    if area >= LARGE_AREA_LIMIT:
        return SizeCategory.LARGE
    return SizeCategory.MEDIUM


def as_image(img) -> ImageBuffer:
    """Validate that ``img`` is an ``(H, W, 3)`` uint8 raster and return it."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidGeometryError(f"expected (H, W, 3) uint8 image, got {arr.dtype} {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidGeometryError(f"empty image {arr.shape}")
    return arr


def _require_inside(box: BoundingBox, img: np.ndarray) -> None:
    h, w = img.shape[:2]
    if not box.fits(w, h):
        raise InvalidGeometryError(f"box {box.as_tuple()} exceeds image {w}x{h}")


def pad_and_clip(box: BoundingBox, pad: int, image_w: int, image_h: int) -> BoundingBox:
    """Grow ``box`` by ``pad`` pixels on every side and clip it to the image."""
    if pad < 0:
        raise InvalidGeometryError(f"pad must be >= 0, got {pad}")
    if not box.fits(image_w, image_h):
        raise InvalidGeometryError(f"box {box.as_tuple()} exceeds image {image_w}x{image_h}")
    return BoundingBox(
        max(box.x0 - pad, 0),
        max(box.y0 - pad, 0),
        min(box.x1 + pad, image_w),
        min(box.y1 + pad, image_h),
    )


def crop(img: ImageBuffer, box: BoundingBox) -> ImageBuffer:
    img = np.asarray(img)
    _require_inside(box, img)
    return img[box.as_slices()].copy()


def paste(dst: ImageBuffer, patch: ImageBuffer, box: BoundingBox) -> ImageBuffer:
    """Return a copy of ``dst`` with the ``box`` region replaced by ``patch``."""
    dst = np.asarray(dst)
    patch = np.asarray(patch)
    _require_inside(box, dst)
    if patch.shape[:2] != (box.height, box.width) or patch.shape[2:] != dst.shape[2:]:
        raise InvalidGeometryError(
            f"patch shape {patch.shape} does not fit box {box.as_tuple()} in image {dst.shape}"
        )
    out = dst.copy()
    out[box.as_slices()] = patch
    return out


def _sample_plan(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, clamped at the borders
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def bilinear(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Unrounded bilinear resampling of an ``(H, W, C)`` array, as float64."""
    if out_w < 1 or out_h < 1:
        raise InvalidGeometryError(f"target size must be positive, got {out_w}x{out_h}")
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    y_lo, y_hi, fy = _sample_plan(h, out_h)
    x_lo, x_hi, fx = _sample_plan(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    rows = arr[y_lo] * (1.0 - fy) + arr[y_hi] * fy
    return rows[:, x_lo] * (1.0 - fx) + rows[:, x_hi] * fx


def round_to_uint8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero and saturate to [0, 255]."""
    return np.clip(np.sign(values) * np.floor(np.abs(values) + 0.5), 0, 255).astype(np.uint8)


def resize(img: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    img = np.asarray(img)
    if img.shape[1] == out_w and img.shape[0] == out_h:
        return img.copy()
    return round_to_uint8(bilinear(img, out_w, out_h))


PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def read_image(path: PathLike) -> ImageBuffer:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"), dtype=np.uint8)


def write_image(img: ImageBuffer, path: PathLike, quality: int = 95) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pil = Image.fromarray(as_image(img), mode="RGB")
    if path.suffix.lower() in (".jpg", ".jpeg"):
        pil.save(path, quality=quality)
    else:
        pil.save(path, format="PNG")


def list_images(root: PathLike) -> list[str]:
    """Relative POSIX paths of every PNG/JPEG under ``root``, sorted."""
    root = Path(root)
    found: Iterable[Path] = (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    return sorted(p.relative_to(root).as_posix() for p in found)
