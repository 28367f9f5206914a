"""Raster loading and fixed-size patch tiling.

Pixel coordinates throughout the package put the origin at the top-left
corner, x to the right and y downward.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ._validation import check_positive_int
from .exceptions import ConfigurationError, FormatError, InputError

DEFAULT_PATCH_SIZE = 1000


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Immutable 8-bit RGB pixel grid, stored as a read-only ``(H, W, 3)`` array."""

    id: str
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InputError(f"raster {self.id!r}: expected (H, W, 3) pixels, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InputError(f"raster {self.id!r}: empty pixel grid")
        if px.dtype != np.uint8:
            raise InputError(f"raster {self.id!r}: pixels must be uint8, got {px.dtype}")
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True, order=True)
class PatchWindow:
    row_index: int
    col_index: int
    origin_x_px: int
    origin_y_px: int
    width_px: int
    height_px: int

    @property
    def patch_id(self) -> str:
        return f"r{self.row_index}_c{self.col_index}"

    def contains(self, x: float, y: float) -> bool:
        """Closed on the left/top edges, open on the right/bottom edges."""
        return (
            self.origin_x_px <= x < self.origin_x_px + self.width_px
            and self.origin_y_px <= y < self.origin_y_px + self.height_px
        )


def _origins(extent: int, stride: int) -> range:
    return range(0, extent, stride)


def plan_tiles(width_px, height_px, patch_size=DEFAULT_PATCH_SIZE, stride=None) -> list[PatchWindow]:
    """Lay out row-major patch windows over a ``width_px`` x ``height_px`` raster.

    Window origins are the multiples of ``stride`` inside the image; windows
    running past the right or bottom edge are clipped, never padded.
    """
    width_px = check_positive_int(width_px, "width_px")
    height_px = check_positive_int(height_px, "height_px")
    patch_size = check_positive_int(patch_size, "patch_size")
    stride = patch_size if stride is None else check_positive_int(stride, "stride")
    if stride > patch_size:
        raise ConfigurationError(
            f"stride ({stride}) exceeds patch size ({patch_size}); pixels between patches would be skipped"
        )
    windows = []
    for row, oy in enumerate(_origins(height_px, stride)):
        for col, ox in enumerate(_origins(width_px, stride)):
            windows.append(
                PatchWindow(
                    row_index=row,
                    col_index=col,
                    origin_x_px=ox,
                    origin_y_px=oy,
                    width_px=min(patch_size, width_px - ox),
                    height_px=min(patch_size, height_px - oy),
                )
            )
    return windows


def crop(image: RasterImage, window: PatchWindow) -> RasterImage:
    """Return the sub-raster under ``window``; the id records the source and tile indices."""
    x0, y0 = window.origin_x_px, window.origin_y_px
    x1, y1 = x0 + window.width_px, y0 + window.height_px
    if x0 < 0 or y0 < 0 or window.width_px < 1 or window.height_px < 1:
        raise InputError(f"window {window} has a negative origin or empty extent")
    if x1 > image.width_px or y1 > image.height_px:
        raise InputError(
            f"window {window} exceeds image bounds {image.width_px}x{image.height_px}"
        )
    return RasterImage(
        id=f"{image.id}_r{window.row_index}_c{window.col_index}",
        pixels=image.pixels[y0:y1, x0:x1],
    )


def load_raster(path, image_id: str | None = None) -> RasterImage:
    """Read a PNG or uncompressed TIFF holding 8-bit RGB pixels."""
    path = Path(path)
    try:
        img = Image.open(path)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"{path}: not a readable raster ({exc})") from exc
    with img:
        if img.format not in ("PNG", "TIFF"):
            raise FormatError(f"{path}: unsupported raster format {img.format!r} (PNG or TIFF only)")
        if img.format == "TIFF" and img.info.get("compression", "raw") != "raw":
            raise FormatError(f"{path}: compressed TIFF ({img.info['compression']}) is not supported")
        if img.mode != "RGB":
            raise FormatError(f"{path}: expected 8-bit RGB pixels, got mode {img.mode!r}")
        pixels = np.array(img, dtype=np.uint8)
    return RasterImage(id=image_id or path.stem, pixels=pixels)


def save_png(image: RasterImage, path) -> None:
    Image.fromarray(np.ascontiguousarray(image.pixels)).save(path, format="PNG")
