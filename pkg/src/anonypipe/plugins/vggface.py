"""VGG-Face embeddings (2622-d) via ``deepface``."""

from __future__ import annotations

import numpy as np

from anonypipe.backends import Capabilities, EmbedBackend


class VggFaceEmbedder(EmbedBackend):
    def __init__(self, model_name: str = "VGG-Face"):
        from deepface import DeepFace

        self._deepface = DeepFace
        self.model_name = model_name
        probe = self._represent(np.zeros((32, 32, 3), dtype=np.uint8))
        self.capabilities = Capabilities(
            name=f"deepface:{model_name}", version="unknown", embedding_dim=int(probe.size)
        )

    def _represent(self, image):
        reps = self._deepface.represent(
            img_path=image[..., ::-1].copy(), model_name=self.model_name, detector_backend="skip", enforce_detection=False
        )
        return np.asarray(reps[0]["embedding"], dtype=np.float64)

    def embed(self, image):
        return self._represent(image)


def create_embedder(options: dict) -> VggFaceEmbedder:
    return VggFaceEmbedder(model_name=options.get("model", "VGG-Face"))
