"""Extract, correct, georeference and link text labels from scanned historical maps."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    CapacityError,
    ConfigurationError,
    CorruptGazetteerError,
    DegenerateGeometryError,
    FormatError,
    InputError,
    InsufficientControlError,
    MapKuratorError,
    SerializationError,
    StageError,
    UnsupportedMethodError,
)
from .georef import AffineGeoreferencer, AffineTransform, GroundControlPoint, fit_affine  # noqa: E402
from .linker import EntityLinker, GazetteerIndex, GeoEntity, load_gazetteer  # noqa: E402
from .merge import PatchMerger  # noqa: E402
from .pipeline import PipelineConfig, RunStats, run_pipeline, validate_config  # noqa: E402
from .postocr import PostOCRCorrector, levenshtein  # noqa: E402
from .raster import PatchWindow, RasterImage, crop, load_raster, plan_tiles  # noqa: E402
from .recommender import TypeRecommender  # noqa: E402

__all__ = [
    "AffineGeoreferencer",
    "AffineTransform",
    "CapacityError",
    "ConfigurationError",
    "CorruptGazetteerError",
    "DegenerateGeometryError",
    "EntityLinker",
    "FormatError",
    "GazetteerIndex",
    "GeoEntity",
    "GroundControlPoint",
    "InputError",
    "InsufficientControlError",
    "MapKuratorError",
    "PatchMerger",
    "PatchWindow",
    "PipelineConfig",
    "PostOCRCorrector",
    "RasterImage",
    "RunStats",
    "SerializationError",
    "StageError",
    "TypeRecommender",
    "UnsupportedMethodError",
    "crop",
    "fit_affine",
    "levenshtein",
    "load_gazetteer",
    "load_raster",
    "plan_tiles",
    "run_pipeline",
    "validate_config",
]
