"""Face anonymization methods.

Three obfuscation baselines (Gaussian blur, white-out crop, pixelation) work on
the face box alone. The diffusion method cuts a padded context patch around each
face, asks an inpainting backend to regenerate the face area and writes back
only the unpadded face box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from anonypipe.backends import InpaintBackend
from anonypipe.detection import FaceDetection, order_faces
from anonypipe.errors import BackendError, InvalidGeometryError
from anonypipe.imaging import (
    BoundingBox,
    ImageBuffer,
    as_image,
    bilinear,
    crop,
    pad_and_clip,
    paste,
    resize,
    round_to_uint8,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussConfig:
    sigma: float = 3.0
    kernel_radius: Optional[int] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.kernel_radius is not None and self.kernel_radius < 0:
            raise ValueError(f"kernel_radius must be >= 0, got {self.kernel_radius}")

    @property
    def radius(self) -> int:
        if self.kernel_radius is not None:
            return self.kernel_radius
        return math.ceil(3 * self.sigma)


@dataclass(frozen=True)
class PixelConfig:
    patch_size: int = 8

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")


@dataclass(frozen=True)
class LdfaConfig:
    context_pad: int = 32
    model_resolution: int = 512
    prompt: str = ""
    cfg_scale: float = 1.0
    sampler_id: str = "k_euler_a"
    inference_steps: int = 50
    base_seed: int = 0

    def __post_init__(self):
        if self.context_pad < 0:
            raise ValueError(f"context_pad must be >= 0, got {self.context_pad}")
        if self.model_resolution < 64:
            raise ValueError(f"model_resolution must be >= 64, got {self.model_resolution}")
        if self.inference_steps < 1:
            raise ValueError(f"inference_steps must be >= 1, got {self.inference_steps}")


MethodConfig = Union[GaussConfig, PixelConfig, LdfaConfig, None]


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized 1-D Gaussian taps for offsets ``-radius..radius`` (zero mean)."""
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    n = arr.shape[axis]
    out = np.zeros_like(arr, dtype=np.float64)
    for i, weight in enumerate(kernel):
        out += weight * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def anonymize_gauss(img: ImageBuffer, box: BoundingBox, cfg: GaussConfig = GaussConfig()) -> ImageBuffer:
    """Blur the face box with a separable Gaussian.

    Only the face crop is filtered; its borders are extended by edge replication,
    so pixels outside the box neither change nor influence the result.
    """
    face = crop(img, box).astype(np.float64)
    kernel = gaussian_kernel(cfg.sigma, cfg.radius)
    blurred = _convolve_axis(_convolve_axis(face, kernel, axis=1), kernel, axis=0)
    return paste(img, round_to_uint8(blurred), box)


def anonymize_crop(img: ImageBuffer, box: BoundingBox) -> ImageBuffer:
    patch = np.full((box.height, box.width, 3), 255, dtype=np.uint8)
    return paste(img, patch, box)


def anonymize_pixel(img: ImageBuffer, box: BoundingBox, cfg: PixelConfig = PixelConfig()) -> ImageBuffer:
    face = crop(img, box).astype(np.int64)
    size = cfg.patch_size
    for ty in range(0, box.height, size):
        for tx in range(0, box.width, size):
            tile = face[ty : ty + size, tx : tx + size]
            n = tile.shape[0] * tile.shape[1]
            total = tile.sum(axis=(0, 1))
            # exact integer rounding of total / n, half away from zero
            tile[...] = (2 * total + n) // (2 * n)
    return paste(img, face.astype(np.uint8), box)


@dataclass
class FaceFailure:
    index: int
    box: BoundingBox
    reason: str


@dataclass
class LdfaResult:
    image: ImageBuffer
    anonymized: list[FaceDetection] = field(default_factory=list)
    failures: list[FaceFailure] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures


def inpaint_mask(padded: BoundingBox, face: BoundingBox, resolution: int) -> tuple[np.ndarray, BoundingBox]:
    """Mask of the face box inside a padded patch resized to ``resolution``².

    The top-left corner is floored and the bottom-right ceiled, so the mask never
    under-covers the face. Returns the mask and the covered box in model space.
    """
    pw, ph = padded.width, padded.height
    rx0, ry0 = face.x0 - padded.x0, face.y0 - padded.y0
    rx1, ry1 = face.x1 - padded.x0, face.y1 - padded.y0
    mapped = BoundingBox(
        rx0 * resolution // pw,
        ry0 * resolution // ph,
        -(-rx1 * resolution // pw),
        -(-ry1 * resolution // ph),
    )
    mask = np.zeros((resolution, resolution), dtype=bool)
    mask[mapped.as_slices()] = True
    return mask, mapped


def _check_inpaint_output(out, patch: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.asarray(out)
    if out.shape != patch.shape or out.dtype != np.uint8:
        raise BackendError(f"inpainter returned {out.dtype} {out.shape}, expected uint8 {patch.shape}")
    if not np.array_equal(out[~mask], patch[~mask]):
        raise BackendError("inpainter modified pixels outside the mask")
    return out


def anonymize_ldfa(
    img: ImageBuffer,
    faces: Sequence[FaceDetection],
    cfg: LdfaConfig,
    inpainter: InpaintBackend,
) -> LdfaResult:
    """Replace every face with backend-generated content, one face at a time.

    Faces are handled by descending confidence. Each one sees the canvas as left
    by the previous faces, gets ``cfg.context_pad`` pixels of context, is resized
    to ``cfg.model_resolution`` squared for the backend and seeded with
    ``cfg.base_seed + index``. Only the unpadded face box is written back, so
    later faces overwrite earlier ones where boxes overlap.

    A failing backend call (or one that breaks the mask contract) skips that face
    and is recorded in ``failures``; the result is then not ``complete``.
    """
    canvas = as_image(img).copy()
    h, w = canvas.shape[:2]
    for face in faces:
        if not face.box.fits(w, h):
            raise InvalidGeometryError(f"face box {face.box.as_tuple()} outside image {w}x{h}")

    result = LdfaResult(canvas)
    res = cfg.model_resolution
    for index, face in enumerate(order_faces(faces)):
        seed = cfg.base_seed + index
        result.seeds.append(seed)
        padded = pad_and_clip(face.box, cfg.context_pad, w, h)
        patch = crop(canvas, padded)
        model_in = resize(patch, res, res)
        mask, _ = inpaint_mask(padded, face.box, res)
        try:
            model_out = inpainter.inpaint(
                model_in,
                mask,
                prompt=cfg.prompt,
                cfg_scale=cfg.cfg_scale,
                sampler_id=cfg.sampler_id,
                inference_steps=cfg.inference_steps,
                seed=seed,
            )
            model_out = _check_inpaint_output(model_out, model_in, mask)
        except Exception as exc:  # noqa: BLE001 - any backend failure is per-face
            log.warning("inpainting face %d %s failed: %s", index, face.box.as_tuple(), exc)
            result.failures.append(FaceFailure(index, face.box, f"{type(exc).__name__}: {exc}"))
            continue

        back = resize(model_out, padded.width, padded.height)
        # Resampling to model resolution and back is lossy; keep the original
        # sample wherever no contributing model-space pixel was changed.
        changed = np.any(model_out != model_in, axis=2, keepdims=True).astype(np.float64)
        touched = bilinear(changed, padded.width, padded.height)[..., 0] > 0
        merged = np.where(touched[..., None], back, patch)

        inner = face.box.translate(-padded.x0, -padded.y0)
        canvas[face.box.as_slices()] = merged[inner.as_slices()]
        result.anonymized.append(face)
    return result


def anonymize_boxes(img: ImageBuffer, faces: Sequence[FaceDetection], method: str, cfg: MethodConfig = None) -> ImageBuffer:
    """Apply one of the naive methods to every face box."""
    out = as_image(img)
    for face in order_faces(faces):
        if method == "gauss":
            out = anonymize_gauss(out, face.box, cfg or GaussConfig())
        elif method == "crop":
            out = anonymize_crop(out, face.box)
        elif method == "pixel":
            out = anonymize_pixel(out, face.box, cfg or PixelConfig())
        else:
            raise ValueError(f"unknown naive method {method!r}")
    return out
