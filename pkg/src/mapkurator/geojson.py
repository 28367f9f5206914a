"""GeoJSON (RFC 7946) output records."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import geometry
from .exceptions import InputError, SerializationError

COORD_DECIMALS = 7
SCORE_DECIMALS = 6
PROPERTY_KEYS = ("text", "score", "postocr_label", "osm_id")


@dataclass(frozen=True)
class GeoFeature:
    ring_geo: tuple[tuple[float, float], ...]
    text: str
    score: float
    postocr_label: str
    osm_ids: tuple[str, ...] = ()
    provenance: tuple[int, ...] = field(default=(), compare=False)


def _round(value: float, ndigits: int, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise SerializationError(f"non-finite {what}: {value}")
    out = round(value, ndigits)
    return 0.0 if out == 0 else out  # no "-0.0" in output


def emit_feature(f: GeoFeature) -> dict:
    """Feature dict with a closed, counterclockwise ring and the four label properties."""
    ring = list(f.ring_geo)
    if len(ring) > 1 and tuple(ring[0]) == tuple(ring[-1]):
        ring = ring[:-1]
    if len(ring) < 3:
        raise InputError("feature ring needs at least 3 vertices")
    coords = [[_round(x, COORD_DECIMALS, "coordinate"), _round(y, COORD_DECIMALS, "coordinate")] for x, y in ring]
    coords = [list(p) for p in geometry.orient_ccw(coords).tolist()]
    coords.append(list(coords[0]))
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [coords]},
        "properties": {
            "text": f.text,
            "score": _round(f.score, SCORE_DECIMALS, "score"),
            "postocr_label": f.postocr_label,
            "osm_id": list(f.osm_ids),
        },
    }


def parse_feature(obj: dict) -> GeoFeature:
    """Inverse of :func:`emit_feature` (the closing vertex is dropped)."""
    ring = obj["geometry"]["coordinates"][0]
    props = obj["properties"]
    return GeoFeature(
        ring_geo=tuple((float(x), float(y)) for x, y in ring[:-1]),
        text=props["text"],
        score=float(props["score"]),
        postocr_label=props["postocr_label"],
        osm_ids=tuple(props["osm_id"]),
    )


def dumps_collection(features: Iterable[GeoFeature]) -> str:
    """Serialize a FeatureCollection, one feature per line, sorted by provenance."""
    ordered = sorted(features, key=lambda f: f.provenance)
    lines = [json.dumps(emit_feature(f), ensure_ascii=False, allow_nan=False, separators=(",", ":"))
             for f in ordered]
    if not lines:
        return '{"type":"FeatureCollection","features":[]}\n'
    return '{"type":"FeatureCollection","features":[\n' + ",\n".join(lines) + "\n]}\n"


def emit_collection(features: Iterable[GeoFeature], out_path) -> Path:
    text = dumps_collection(features)
    out_path = Path(out_path)
    try:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write GeoJSON to {out_path}: {exc}") from exc
    return out_path


def load_collection(path) -> list[GeoFeature]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [parse_feature(obj) for obj in doc["features"]]
