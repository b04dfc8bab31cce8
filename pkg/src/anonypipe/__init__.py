"""Face anonymization for perception datasets: detect, then inpaint or obfuscate.

The package bundles the anonymization methods (diffusion inpainting orchestration
plus Gaussian blur, crop and pixelation baselines) and the evaluation metrics used
to compare them (face-detection mAP by size, NoA, segmentation IoU/iIoU and
embedding distances).
"""

from anonypipe.imaging import BoundingBox, SizeCategory, crop, pad_and_clip, paste, resize, size_category
from anonypipe.detection import DetectionManifest, FaceDetection, ManifestEntry, count_noa, detect_faces
from anonypipe.anonymizers import (
    GaussConfig,
    LdfaConfig,
    LdfaResult,
    PixelConfig,
    anonymize_crop,
    anonymize_gauss,
    anonymize_ldfa,
    anonymize_pixel,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "DetectionManifest",
    "FaceDetection",
    "GaussConfig",
    "LdfaConfig",
    "LdfaResult",
    "ManifestEntry",
    "PixelConfig",
    "SizeCategory",
    "anonymize_crop",
    "anonymize_gauss",
    "anonymize_ldfa",
    "anonymize_pixel",
    "count_noa",
    "crop",
    "detect_faces",
    "pad_and_clip",
    "paste",
    "resize",
    "size_category",
]
