"""TOML run configuration.

Example::

    method = "ldfa"
    input_dir = "data/leftImg8bit/train"
    output_dir = "out/ldfa"
    base_seed = 0
    jobs = 4

    [detector]
    backend = "stub"
    threshold = 0.4
    stub.sidecar_path = "faces.json"

    [inpainter]
    backend = "stub"
    stub.identity = false

    [ldfa]
    context_pad = 32
    model_resolution = 512
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from anonypipe.anonymizers import GaussConfig, LdfaConfig, MethodConfig, PixelConfig
from anonypipe.detection import DEFAULT_THRESHOLD
from anonypipe.errors import ConfigError

METHODS = ("gauss", "crop", "pixel", "ldfa")
_METHOD_CONFIGS = {"gauss": GaussConfig, "pixel": PixelConfig, "ldfa": LdfaConfig}


def check_threshold(value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"threshold must be a number, got {value!r}") from None
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {value}")
    return value


@dataclass
class RunConfig:
    method: str
    input_dir: Path
    output_dir: Path
    method_config: MethodConfig = None
    threshold: float = DEFAULT_THRESHOLD
    base_seed: int = 0
    jobs: int = 1
    output_format: str = "png"
    detector: dict = field(default_factory=lambda: {"backend": "stub"})
    inpainter: dict = field(default_factory=lambda: {"backend": "stub"})
    embedder: dict = field(default_factory=lambda: {"backend": "stub"})

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        expected = _METHOD_CONFIGS.get(self.method)
        if expected is None:
            self.method_config = None
        elif self.method_config is None:
            self.method_config = expected()
        elif not isinstance(self.method_config, expected):
            raise ConfigError(f"method {self.method!r} needs a {expected.__name__}")
        if isinstance(self.method_config, LdfaConfig) and self.method_config.base_seed != self.base_seed:
            self.method_config = LdfaConfig(**{**asdict(self.method_config), "base_seed": self.base_seed})
        self.threshold = check_threshold(self.threshold)
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.output_format not in ("png", "jpeg"):
            raise ConfigError(f"output_format must be 'png' or 'jpeg', got {self.output_format!r}")
        self.input_dir = Path(self.input_dir)
        self.output_dir = Path(self.output_dir)

    def snapshot(self) -> dict:
        """All effective settings, defaults included, as plain JSON data."""
        return {
            "method": self.method,
            "input_dir": str(self.input_dir),
            "output_dir": str(self.output_dir),
            "method_config": asdict(self.method_config) if self.method_config else {},
            "threshold": self.threshold,
            "base_seed": self.base_seed,
            "jobs": self.jobs,
            "output_format": self.output_format,
            "detector": self.detector,
            "inpainter": self.inpainter,
            "embedder": self.embedder,
        }


def _resolve_paths(section: dict, base: Path) -> dict:
    section = dict(section)
    stub = dict(section.get("stub", {}) or {})
    if "sidecar_path" in stub:
        stub["sidecar_path"] = str((base / stub["sidecar_path"]).resolve())
    if stub:
        section["stub"] = stub
    return section


def _method_config(method: str, raw: dict):
    cls = _METHOD_CONFIGS.get(method)
    if cls is None:
        return None
    section = raw.get(method, {}) or {}
    known = {f.name for f in fields(cls)} - {"base_seed"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{method}]: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{method}] section: {exc}") from exc


def config_from_dict(raw: dict[str, Any], base_dir: Optional[Path] = None, **overrides) -> RunConfig:
    """Build a RunConfig from parsed TOML; relative paths resolve against ``base_dir``."""
    base = Path(base_dir or ".")
    raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    if "method" not in raw:
        raise ConfigError("config is missing 'method'")
    method = raw["method"]
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    detector = _resolve_paths(raw.get("detector", {"backend": "stub"}), base)
    threshold = raw.get("threshold", detector.pop("threshold", DEFAULT_THRESHOLD))
    detector.pop("threshold", None)
    for key in ("input_dir", "output_dir"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    try:
        return RunConfig(
            method=method,
            input_dir=(base / raw["input_dir"]).resolve(),
            output_dir=(base / raw["output_dir"]).resolve(),
            method_config=_method_config(method, raw),
            threshold=threshold,
            base_seed=int(raw.get("base_seed", 0)),
            jobs=int(raw.get("jobs", 1)),
            output_format=raw.get("output_format", "png"),
            detector=detector,
            inpainter=_resolve_paths(raw.get("inpainter", {"backend": "stub"}), base),
            embedder=_resolve_paths(raw.get("embedder", {"backend": "stub"}), base),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    return config_from_dict(read_toml(path), base_dir=path.parent, **overrides)
