"""Deterministic synthetic map fixtures with exact ground truth.

A generated map directory holds ``map.png``, ``truth.jsonl`` (label text and
rotated-rectangle polygon in map pixels), ``gcps.json`` (four exact corner
control points) and ``gazetteer.jsonl`` (one polygon entity per label).
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CapacityError, InputError
from .georef import AffineTransform, GroundControlPoint, apply, write_gcp_metadata
from .glyphs import ADVANCE, GLYPH_H, text_bitmap
from .linker import GeoEntity
from .postocr import levenshtein
from .raster import RasterImage, save_png
from .spotter import GroundTruthLabel, write_truth

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
BACKGROUND_RGB = (236, 226, 198)
GRID_RGB = (205, 190, 160)
INK_RGB = (60, 40, 25)
PLACEMENT_RETRIES = 1000
MIN_SEPARATION = 5
EDGE_MARGIN_PX = 4
LABEL_GAP_PX = 6
POLYGON_DECIMALS = 3

DEFAULT_TRANSFORM = AffineTransform(a=-93.30, b=1.0e-5, c=2.0e-7, d=44.99, e=-2.0e-7, f=-1.0e-5)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 42
    width_px: int = 3000
    height_px: int = 2000
    n_labels: int = 50
    label_length: tuple[int, int] = (6, 10)
    rotation_deg: tuple[int, int] = (-30, 30)
    glyph_scale: tuple[int, int] = (2, 4)
    background: str = "plain"  # "plain" or "grid"
    transform: AffineTransform = field(default=DEFAULT_TRANSFORM)
    separated_vocab: bool = False

    def validate(self):
        if self.width_px < 1 or self.height_px < 1:
            raise InputError("synthetic map dimensions must be positive")
        if self.n_labels < 0:
            raise InputError("n_labels must be >= 0")
        for name in ("label_length", "rotation_deg", "glyph_scale"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InputError(f"{name} range is empty: {lo} > {hi}")
        if self.label_length[0] < 1 or self.glyph_scale[0] < 1:
            raise InputError("label_length and glyph_scale must start at >= 1")
        if self.background not in ("plain", "grid"):
            raise InputError(f"unknown background style {self.background!r}")
        if self.transform.determinant == 0:
            raise InputError("generating transform is singular")


@dataclass(frozen=True)
class PlacedLabel:
    text: str
    center: tuple[int, int]
    angle_deg: int
    scale: int
    polygon: tuple[tuple[float, float], ...]

    @property
    def block_size(self) -> tuple[int, int]:
        return (ADVANCE * len(self.text) - 1) * self.scale, GLYPH_H * self.scale


@dataclass
class SynthMap:
    image: RasterImage
    labels: list[PlacedLabel]
    gcps: list[GroundControlPoint]
    entities: list[GeoEntity]

    @property
    def truth(self) -> list[GroundTruthLabel]:
        return [GroundTruthLabel(lab.text, lab.polygon) for lab in self.labels]


def _rect_polygon(cx, cy, w, h, angle_deg):
    """Corners TL, TR, BR, BL of a ``w`` x ``h`` block rotated about its centre."""
    t = math.radians(angle_deg)
    ct, st = math.cos(t), math.sin(t)
    out = []
    for u, v in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        out.append((round(cx + ct * u - st * v, POLYGON_DECIMALS), round(cy + st * u + ct * v, POLYGON_DECIMALS)))
    return tuple(out)


def _box(poly, pad=0.0):
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad


def _boxes_overlap(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _draw_text(length_range, rng):
    n = rng.randint(*length_range)
    return "".join(rng.choice(LETTERS) for _ in range(n))


def _pick_text(spec, rng, used):
    for _ in range(PLACEMENT_RETRIES):
        text = _draw_text(spec.label_length, rng)
        if text in used:
            continue
        if spec.separated_vocab and any(levenshtein(text, other) < MIN_SEPARATION for other in used):
            continue
        return text
    raise CapacityError("could not draw a sufficiently distinct label text")


def place_labels(spec: SynthSpec) -> list[PlacedLabel]:
    """Rejection-sample non-overlapping label placements (integer decisions only)."""
    rng = random.Random(spec.seed)
    placed: list[PlacedLabel] = []
    boxes = []
    used: list[str] = []
    for k in range(spec.n_labels):
        text = _pick_text(spec, rng, used)
        for _ in range(PLACEMENT_RETRIES):
            scale = rng.randint(*spec.glyph_scale)
            angle = rng.randint(*spec.rotation_deg)
            w = (ADVANCE * len(text) - 1) * scale
            h = GLYPH_H * scale
            cx = rng.randint(0, spec.width_px)
            cy = rng.randint(0, spec.height_px)
            poly = _rect_polygon(cx, cy, w, h, angle)
            box = _box(poly)
            if (box[0] < EDGE_MARGIN_PX or box[1] < EDGE_MARGIN_PX
                    or box[2] > spec.width_px - EDGE_MARGIN_PX or box[3] > spec.height_px - EDGE_MARGIN_PX):
                continue
            padded = _box(poly, LABEL_GAP_PX)
            if any(_boxes_overlap(padded, other) for other in boxes):
                continue
            placed.append(PlacedLabel(text, (cx, cy), angle, scale, poly))
            boxes.append(box)
            used.append(text)
            break
        else:
            raise CapacityError(
                f"placed {k} of {spec.n_labels} labels; {spec.width_px}x{spec.height_px} raster is too small"
            )
    return placed


def ink_mask(label: PlacedLabel, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Boolean mask of inked pixels of ``label`` over the pixel window ``[x0, x1) x [y0, y1)``.

    A pixel is inked when its centre, mapped back into the unrotated text
    block, falls on a set glyph cell.
    """
    w, h = label.block_size
    bitmap = text_bitmap(label.text)
    t = math.radians(label.angle_deg)
    ct, st = math.cos(t), math.sin(t)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dx = xs + 0.5 - label.center[0]
    dy = ys + 0.5 - label.center[1]
    u = ct * dx + st * dy + w / 2
    v = -st * dx + ct * dy + h / 2
    inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    col = np.clip((u // label.scale).astype(int), 0, bitmap.shape[1] - 1)
    row = np.clip((v // label.scale).astype(int), 0, bitmap.shape[0] - 1)
    return inside & bitmap[row, col]


def render(spec: SynthSpec, labels: list[PlacedLabel]) -> np.ndarray:
    pixels = np.empty((spec.height_px, spec.width_px, 3), dtype=np.uint8)
    pixels[:] = BACKGROUND_RGB
    if spec.background == "grid":
        pixels[::250, :] = GRID_RGB
        pixels[:, ::250] = GRID_RGB
    for lab in labels:
        x0, y0, x1, y1 = _box(lab.polygon, 2)
        x0, y0 = max(0, math.floor(x0)), max(0, math.floor(y0))
        x1, y1 = min(spec.width_px, math.ceil(x1)), min(spec.height_px, math.ceil(y1))
        mask = ink_mask(lab, x0, y0, x1, y1)
        pixels[y0:y1, x0:x1][mask] = INK_RGB
    return pixels


def corner_gcps(spec: SynthSpec) -> list[GroundControlPoint]:
    t = spec.transform
    out = []
    for px, py in ((0, 0), (spec.width_px, 0), (spec.width_px, spec.height_px), (0, spec.height_px)):
        lon, lat = t(float(px), float(py))
        out.append(GroundControlPoint(float(px), float(py), lon, lat))
    return out


def build(spec: SynthSpec) -> SynthMap:
    spec.validate()
    labels = place_labels(spec)
    image = RasterImage(id=f"synth_{spec.seed}", pixels=render(spec, labels))
    pops = random.Random(spec.seed + 1).sample(range(1, 10 * max(1, spec.n_labels) + 1), spec.n_labels)
    entities = [
        GeoEntity(
            id=f"way/{1000 + i}",
            name=lab.text.title(),
            popularity=pops[i],
            geometry_type="Polygon",
            coordinates=tuple(apply(spec.transform, lab.polygon)),
        )
        for i, lab in enumerate(labels)
    ]
    return SynthMap(image=image, labels=labels, gcps=corner_gcps(spec), entities=entities)


def generate(spec: SynthSpec, out_dir) -> dict[str, Path]:
    """Write the four fixture files into ``out_dir`` and return their paths."""
    synth = build(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "map": out / "map.png",
        "truth": out / "truth.jsonl",
        "gcps": out / "gcps.json",
        "gazetteer": out / "gazetteer.jsonl",
    }
    save_png(synth.image, paths["map"])
    write_truth(synth.truth, paths["truth"])
    write_gcp_metadata(synth.gcps, paths["gcps"])
    with open(paths["gazetteer"], "w", encoding="utf-8", newline="\n") as fh:
        for ent in synth.entities:
            fh.write(json.dumps(ent.to_record()) + "\n")
    return paths
