"""Exception hierarchy shared across the toolkit."""


class AnonypipeError(Exception):
    """Base class for all toolkit errors."""


class InvalidGeometryError(AnonypipeError, ValueError):
    """A box is degenerate, out of bounds, or does not match a patch."""


class BackendError(AnonypipeError, RuntimeError):
    """A detector, inpainter or embedder failed or broke its contract."""


class DetectionError(BackendError):
    def __init__(self, image_id, cause):
        super().__init__(f"detection failed for {image_id!r}: {cause}")
        self.image_id = image_id
        self.cause = cause


class EvaluationError(AnonypipeError, ValueError):
    """Inputs to a metric are inconsistent (shape mismatch, unaligned sets, ...)."""


class UndefinedMetricError(EvaluationError, ZeroDivisionError):
    """A ratio is undefined, e.g. a relative change against a zero baseline."""


class ConfigError(AnonypipeError, ValueError):
    """Run configuration is missing fields or holds invalid values."""


class ManifestError(AnonypipeError, ValueError):
    """A manifest file does not follow the expected schema."""
