"""Synthetic datasets and small constructors shared by the tests."""

import json
from pathlib import Path

import numpy as np

from anonypipe.detection import DetectionManifest, FaceDetection, ManifestEntry
from anonypipe.imaging import BoundingBox, write_image


def face(x0, y0, x1, y1, conf=1.0):
    return FaceDetection(BoundingBox(x0, y0, x1, y1), conf)


def noise_image(rng, w, h):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def random_faces(rng, w, h, n, min_side=8, max_side=60):
    faces = []
    for _ in range(n):
        bw = int(rng.integers(min_side, max_side + 1))
        bh = int(rng.integers(min_side, max_side + 1))
        x0 = int(rng.integers(0, w - bw + 1))
        y0 = int(rng.integers(0, h - bh + 1))
        faces.append(FaceDetection(BoundingBox(x0, y0, x0 + bw, y0 + bh), round(float(rng.uniform(0.4, 1.0)), 4)))
    return faces


def make_dataset(root: Path, rng, n_images=2, size=(128, 96), faces_per_image=(1, 3), subdir=True):
    """Write noise images plus a sidecar manifest; returns (input_dir, sidecar_path, manifest)."""
    input_dir = root / "in"
    entries = []
    w, h = size
    for i in range(n_images):
        rel = f"city{i % 2}/img_{i:03d}.png" if subdir else f"img_{i:03d}.png"
        write_image(noise_image(rng, w, h), input_dir / rel)
        n = int(rng.integers(faces_per_image[0], faces_per_image[1] + 1))
        entries.append(ManifestEntry(rel, w, h, random_faces(rng, w, h, n, max_side=min(40, w // 2, h // 2))))
    manifest = DetectionManifest(entries).sorted()
    sidecar = root / "sidecar.json"
    manifest.save(sidecar)
    return input_dir, sidecar, manifest


def write_config(path: Path, method: str, input_dir, output_dir, sidecar, extra: str = "") -> Path:
    path.write_text(
        "\n".join(
            [
                f'method = "{method}"',
                f"input_dir = {json.dumps(str(input_dir))}",
                f"output_dir = {json.dumps(str(output_dir))}",
                "base_seed = 7",
                "",
                "[detector]",
                'backend = "stub"',
                "threshold = 0.4",
                f"stub.sidecar_path = {json.dumps(str(sidecar))}",
                extra,
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return path
