"""RetinaFace detector via the ``retina-face`` package."""

from __future__ import annotations

import math

from anonypipe.backends import Capabilities, DetectorBackend
from anonypipe.detection import FaceDetection
from anonypipe.imaging import BoundingBox


class RetinaFaceDetector(DetectorBackend):
    def __init__(self, raw_threshold: float = 0.0):
        from retinaface import RetinaFace

        self._retinaface = RetinaFace
        self._model = RetinaFace.build_model()
        # filtering happens in detect_faces; keep the model's own cut-off permissive
        self.raw_threshold = raw_threshold
        self.capabilities = Capabilities("retinaface", getattr(RetinaFace, "__version__", "unknown"))

    def detect(self, image, image_id=None):
        # the package expects BGR input
        found = self._retinaface.detect_faces(image[..., ::-1].copy(), threshold=self.raw_threshold, model=self._model)
        faces = []
        for record in (found or {}).values() if isinstance(found, dict) else []:
            x0, y0, x1, y1 = record["facial_area"]
            x0, y0 = math.floor(x0), math.floor(y0)
            x1, y1 = max(math.ceil(x1), x0 + 1), max(math.ceil(y1), y0 + 1)
            faces.append(FaceDetection(BoundingBox(x0, y0, x1, y1), min(max(float(record["score"]), 0.0), 1.0)))
        return faces


def create_detector(options: dict) -> RetinaFaceDetector:
    return RetinaFaceDetector(raw_threshold=float(options.get("raw_threshold", 0.0)))
