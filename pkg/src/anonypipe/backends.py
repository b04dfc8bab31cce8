"""Adapter seams for the heavy models plus deterministic stand-ins.

Three kinds of backend exist: a face detector, an inpainter and a face embedder.
Real models are plugins (see :func:`load_backend`); the ``stub`` backends here
are pure functions of their inputs and make the whole toolkit testable without
model weights.
"""

from __future__ import annotations

import hashlib
import importlib
import importlib.util
import os
import sys
import threading
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from anonypipe.detection import DetectionManifest, FaceDetection
from anonypipe.errors import BackendError, ConfigError, InvalidGeometryError

BACKEND_DIR_ENV = "ANONYPIPE_BACKEND_DIR"


@dataclass(frozen=True)
class Capabilities:
    name: str
    version: str
    safe_for_concurrent_calls: bool = False
    deterministic: bool = True
    native_resolution: Optional[int] = None
    embedding_dim: Optional[int] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class DetectorBackend(ABC):
    capabilities: Capabilities

    @abstractmethod
    def detect(self, image: np.ndarray, image_id: Optional[str] = None) -> list[FaceDetection]:
        """Return raw detections; boxes may extend past the image border."""


class InpaintBackend(ABC):
    capabilities: Capabilities

    @abstractmethod
    def inpaint(
        self,
        patch: np.ndarray,
        mask: np.ndarray,
        *,
        prompt: str = "",
        cfg_scale: float = 1.0,
        sampler_id: str = "k_euler_a",
        inference_steps: int = 50,
        seed: int = 0,
    ) -> np.ndarray:
        """Synthesize content where ``mask`` is true.

        Must return an array shaped like ``patch`` whose unmasked pixels are
        bit-identical to the input.
        """


class EmbedBackend(ABC):
    capabilities: Capabilities

    @abstractmethod
    def embed(self, image: np.ndarray) -> np.ndarray:
        """Return a 1-D vector of length ``capabilities.embedding_dim``."""


Backend = Union[DetectorBackend, InpaintBackend, EmbedBackend]


# --- stubs -----------------------------------------------------------------

def stub_detector(img: np.ndarray, sidecar: Sequence[FaceDetection]) -> list[FaceDetection]:
    h, w = img.shape[:2]
    for face in sidecar:
        if not face.box.fits(w, h):
            raise InvalidGeometryError(f"sidecar box {face.box.as_tuple()} outside image {w}x{h}")
    return list(sidecar)


class StubDetector(DetectorBackend):
    """Replays faces from a sidecar manifest, looked up by image path."""

    capabilities = Capabilities("stub", "1", safe_for_concurrent_calls=True)

    def __init__(self, sidecar: Union[DetectionManifest, Mapping[str, Sequence[FaceDetection]]]):
        if isinstance(sidecar, DetectionManifest):
            self._faces = {e.image_path: list(e.faces) for e in sidecar.entries}
        else:
            self._faces = {k: list(v) for k, v in sidecar.items()}

    @classmethod
    def from_file(cls, path) -> "StubDetector":
        return cls(DetectionManifest.load(path))

    def detect(self, image, image_id=None):
        return stub_detector(image, self._faces.get(image_id, []))


def seed_color(seed: int) -> tuple[int, int, int]:
    return (seed % 256, (seed // 256) % 256, (seed // 65536) % 256)


def stub_inpainter(patch: np.ndarray, mask: np.ndarray, seed: int, identity: bool = False) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != patch.shape[:2]:
        raise InvalidGeometryError(f"mask {mask.shape} does not match patch {patch.shape[:2]}")
    out = np.array(patch, copy=True)
    if not identity:
        out[mask] = seed_color(seed)
    return out


class StubInpainter(InpaintBackend):
    capabilities = Capabilities("stub", "1", safe_for_concurrent_calls=True)

    def __init__(self, identity: bool = False):
        self.identity = identity

    def inpaint(self, patch, mask, *, prompt="", cfg_scale=1.0, sampler_id="k_euler_a", inference_steps=50, seed=0):
        return stub_inpainter(patch, mask, seed, identity=self.identity)


def stub_embedder(img: np.ndarray, dim: int) -> np.ndarray:
    """Hash the raster into a ``dim``-vector with entries in [-1, 1)."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    img = np.ascontiguousarray(img)
    digest = hashlib.sha256(repr(img.shape).encode() + img.tobytes()).digest()
    words = np.frombuffer(hashlib.shake_256(digest).digest(8 * dim), dtype="<u8")
    return (words >> np.uint64(11)).astype(np.float64) / float(1 << 52) - 1.0


class StubEmbedder(EmbedBackend):
    def __init__(self, dim: int = 128):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        self.capabilities = Capabilities("stub", "1", safe_for_concurrent_calls=True, embedding_dim=dim)

    def embed(self, image):
        return stub_embedder(image, self.dim)


# --- concurrency -----------------------------------------------------------

class SerializedBackend:
    """Proxy that funnels every call through one lock.

    Used for backends that do not declare ``safe_for_concurrent_calls``.
    """

    _METHODS = ("detect", "inpaint", "embed")

    def __init__(self, backend: Backend):
        self._backend = backend
        self._lock = threading.Lock()

    @property
    def capabilities(self) -> Capabilities:
        return self._backend.capabilities

    def __getattr__(self, name):
        attr = getattr(self._backend, name)
        if name not in self._METHODS:
            return attr

        def locked(*args, **kwargs):
            with self._lock:
                return attr(*args, **kwargs)

        return locked


def guard(backend):
    if backend is None or getattr(backend.capabilities, "safe_for_concurrent_calls", False):
        return backend
    if isinstance(backend, SerializedBackend):
        return backend
    return SerializedBackend(backend)


# --- plugin loading ----------------------------------------------------------

_FACTORIES = {"detector": "create_detector", "inpainter": "create_inpainter", "embedder": "create_embedder"}

_BUILTIN_PLUGINS = {
    "sd-inpaint": "anonypipe.plugins.sd_inpaint",
    "retinaface": "anonypipe.plugins.retinaface",
    "vggface": "anonypipe.plugins.vggface",
}


def _stub(kind: str, options: Mapping[str, Any]):
    stub_opts = options.get("stub", {}) or {}
    if kind == "detector":
        sidecar = stub_opts.get("sidecar_path")
        if not sidecar:
            raise ConfigError("detector.stub.sidecar_path is required for the stub detector")
        return StubDetector.from_file(sidecar)
    if kind == "inpainter":
        return StubInpainter(identity=bool(stub_opts.get("identity", False)))
    return StubEmbedder(dim=int(stub_opts.get("dim", 128)))


def _import_plugin(name: str):
    plugin_dir = os.environ.get(BACKEND_DIR_ENV)
    if plugin_dir:
        candidate = Path(plugin_dir) / f"{name}.py"
        if candidate.is_file():
            mod_name = f"anonypipe_plugin_{name.replace('-', '_')}"
            spec = importlib.util.spec_from_file_location(mod_name, candidate)
            module = importlib.util.module_from_spec(spec)
            sys.modules[mod_name] = module
            spec.loader.exec_module(module)
            return module
    if name in _BUILTIN_PLUGINS:
        return importlib.import_module(_BUILTIN_PLUGINS[name])
    if "." in name:
        return importlib.import_module(name)
    raise ConfigError(
        f"unknown backend {name!r}: not 'stub', not a built-in plugin, and no {name}.py in ${BACKEND_DIR_ENV}"
    )


def load_backend(kind: str, options: Mapping[str, Any]):
    """Instantiate the backend named by ``options['backend']``.

    ``stub`` selects the in-package stand-ins. Any other name is resolved, in
    order, as ``$ANONYPIPE_BACKEND_DIR/<name>.py``, a bundled plugin, or an
    importable dotted module path. Plugin modules expose ``create_detector``,
    ``create_inpainter`` or ``create_embedder`` taking the options mapping.
    """
    if kind not in _FACTORIES:
        raise ValueError(f"unknown backend kind {kind!r}")
    name = options.get("backend", "stub")
    if name == "stub":
        return _stub(kind, options)
    module = _import_plugin(name)
    factory = getattr(module, _FACTORIES[kind], None)
    if factory is None:
        raise ConfigError(f"plugin {name!r} has no {_FACTORIES[kind]}()")
    try:
        backend = factory(dict(options))
    except ImportError as exc:
        raise BackendError(f"backend {name!r} is missing a dependency: {exc}") from exc
    if not hasattr(backend, "capabilities"):
        raise ConfigError(f"plugin {name!r} returned a backend without a capability record")
    return backend
