"""Exception hierarchy shared by every pipeline stage."""


class MapKuratorError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MapKuratorError, ValueError):
    """Invalid or inconsistent configuration values."""


class InputError(MapKuratorError, ValueError):
    """Malformed arguments or input data."""


class FormatError(InputError):
    """Unsupported file format (raster, metadata)."""


class DegenerateGeometryError(MapKuratorError, ValueError):
    """Zero-perimeter rings, collinear control points and similar."""


class InsufficientControlError(MapKuratorError, ValueError):
    """Fewer ground control points than the transform needs."""


class UnsupportedMethodError(MapKuratorError, ValueError):
    """Georeferencing method other than ``affine`` requested."""


class CorruptGazetteerError(MapKuratorError):
    """More than half the lines of a gazetteer file failed to parse."""


class SerializationError(MapKuratorError, ValueError):
    """A value cannot be written as GeoJSON (e.g. NaN coordinates)."""


class CapacityError(MapKuratorError):
    """The synthetic generator could not place all requested labels."""


class StageError(MapKuratorError):
    """A pipeline stage failed.

    ``stage`` names the failing module (``raster-tiler``, ``spotter-interface``
    ...); ``patch_id`` is set for per-patch spotter failures.
    """

    def __init__(self, stage, message, patch_id=None):
        self.stage = stage
        self.patch_id = patch_id
        prefix = f"[{stage}]"
        if patch_id is not None:
            prefix += f" patch {patch_id}:"
        super().__init__(f"{prefix} {message}")
