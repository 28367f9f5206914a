"""Gazetteer loading, spatial indexing and label-to-entity linking.

An entity is linked to a label when

1. the corrected label is a substring of the entity's normalized name, and
2. the label ring and the entity geometry intersect (points get a small
   buffer, since an OSM node has no area).
"""
from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import geometry
from .exceptions import CorruptGazetteerError, InputError
from .geometry import point_in_ring
from .postocr import CorrectionResult
from .text import normalize_label

log = logging.getLogger(__name__)

DEFAULT_CELL_SIZE = 0.01
DEFAULT_POINT_BUFFER = 0.0005
# Entities spanning more cells than this are kept in a list checked on every query.
MAX_CELLS_PER_ENTITY = 4096

__all__ = [
    "GeoEntity", "GazetteerIndex", "EntityLinker", "load_gazetteer", "parse_entity",
    "link", "entity_matches", "point_in_ring",
]


@dataclass(frozen=True)
class GeoEntity:
    id: str
    name: str
    popularity: int
    geometry_type: str  # "Polygon" or "Point"
    coordinates: tuple  # ring of (lon, lat) for polygons, a single (lon, lat) for points
    normalized_name: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.id:
            raise InputError("entity id is empty")
        norm = normalize_label(self.name or "")
        if not norm:
            raise InputError(f"entity {self.id}: empty name")
        if isinstance(self.popularity, bool) or int(self.popularity) != self.popularity or self.popularity < 1:
            raise InputError(f"entity {self.id}: popularity must be an integer >= 1")
        if self.geometry_type == "Polygon":
            ring = [(float(x), float(y)) for x, y in self.coordinates]
            if len(ring) > 1 and ring[0] == ring[-1]:
                ring = ring[:-1]
            if len(ring) < 3:
                raise InputError(f"entity {self.id}: polygon ring needs >= 3 vertices")
            coords = tuple(ring)
            pts = coords
        elif self.geometry_type == "Point":
            lon, lat = self.coordinates
            coords = (float(lon), float(lat))
            pts = (coords,)
        else:
            raise InputError(f"entity {self.id}: unsupported geometry {self.geometry_type!r}")
        for lon, lat in pts:
            if not (math.isfinite(lon) and math.isfinite(lat) and -180 <= lon <= 180 and -90 <= lat <= 90):
                raise InputError(f"entity {self.id}: coordinate ({lon}, {lat}) out of range")
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "popularity", int(self.popularity))
        object.__setattr__(self, "normalized_name", norm)

    @property
    def bbox(self):
        if self.geometry_type == "Point":
            lon, lat = self.coordinates
            return lon, lat, lon, lat
        return geometry.bbox(self.coordinates)

    def to_record(self) -> dict:
        if self.geometry_type == "Point":
            geom = {"type": "Point", "coordinates": list(self.coordinates)}
        else:
            geom = {"type": "Polygon", "coordinates": [[list(p) for p in self.coordinates]]}
        return {"id": self.id, "name": self.name, "popularity": self.popularity, "geometry": geom}


def parse_entity(rec: dict) -> GeoEntity:
    geom = rec["geometry"]
    gtype = geom["type"]
    coords = geom["coordinates"]
    if gtype == "Polygon":
        coords = coords[0]
    return GeoEntity(id=str(rec["id"]), name=rec["name"], popularity=rec.get("popularity", 1),
                     geometry_type=gtype, coordinates=coords)


class GazetteerIndex:
    """Entities keyed by id plus a uniform lon/lat grid over their bounding boxes.

    Built once and not modified afterwards.
    """

    def __init__(self, entities: Iterable[GeoEntity] = (), cell_size: float = DEFAULT_CELL_SIZE):
        if not cell_size > 0:
            raise InputError("grid cell size must be positive")
        self.cell_size = float(cell_size)
        self.entities: dict[str, GeoEntity] = {}
        self.duplicates = 0
        self.malformed = 0
        grid = defaultdict(list)
        oversized = []
        for ent in entities:
            if ent.id in self.entities:
                self.duplicates += 1
                log.warning("gazetteer: duplicate id %s rejected", ent.id)
                continue
            self.entities[ent.id] = ent
            i0, j0, i1, j1 = self._cell_range(ent.bbox)
            if (i1 - i0 + 1) * (j1 - j0 + 1) > MAX_CELLS_PER_ENTITY:
                oversized.append(ent.id)
                continue
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    grid[(i, j)].append(ent.id)
        self.grid = dict(grid)
        self.oversized = tuple(oversized)

    def __len__(self):
        return len(self.entities)

    def cell_of(self, lon: float, lat: float) -> tuple[int, int]:
        return math.floor(lon / self.cell_size), math.floor(lat / self.cell_size)

    def _cell_range(self, box):
        i0, j0 = self.cell_of(box[0], box[1])
        i1, j1 = self.cell_of(box[2], box[3])
        return i0, j0, i1, j1

    def candidates(self, box, buffer: float = 0.0) -> set[str]:
        """Ids of entities whose grid cells touch ``box`` grown by ``buffer``."""
        grown = (box[0] - buffer, box[1] - buffer, box[2] + buffer, box[3] + buffer)
        i0, j0, i1, j1 = self._cell_range(grown)
        found = set(self.oversized)
        if (i1 - i0 + 1) * (j1 - j0 + 1) > len(self.grid):
            for (i, j), ids in self.grid.items():
                if i0 <= i <= i1 and j0 <= j <= j1:
                    found.update(ids)
            return found
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                found.update(self.grid.get((i, j), ()))
        return found


def load_gazetteer(path, cell_size: float = DEFAULT_CELL_SIZE) -> GazetteerIndex:
    """Parse a newline-delimited JSON gazetteer and index it.

    Malformed lines are skipped and counted; the load fails only when more
    than half of the non-blank lines are malformed.
    """
    entities = []
    malformed = total = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            total += 1
            try:
                entities.append(parse_entity(json.loads(line)))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                malformed += 1
                log.warning("gazetteer %s:%d: skipped malformed record (%s)", path, lineno, exc)
    if total and malformed * 2 > total:
        raise CorruptGazetteerError(f"{path}: {malformed} of {total} records are malformed")
    index = GazetteerIndex(entities, cell_size=cell_size)
    index.malformed = malformed
    return index


def entity_matches(label: str, ring_geo, entity: GeoEntity, point_buffer: float = DEFAULT_POINT_BUFFER) -> bool:
    """Both linking criteria for one entity; ``label`` must already be normalized."""
    if not label or label not in entity.normalized_name:
        return False
    if entity.geometry_type == "Point":
        p = entity.coordinates
        return point_in_ring(p, ring_geo) or geometry.distance_to_boundary(p, ring_geo) <= point_buffer
    return geometry.rings_intersect(ring_geo, entity.coordinates)


def _label_text(label) -> str:
    text = label.postocr_label if isinstance(label, CorrectionResult) else label
    return normalize_label(text)


def _ordered(index: GazetteerIndex, ids: Iterable[str]) -> list[str]:
    return sorted(ids, key=lambda i: (-index.entities[i].popularity, i))


def link(label, ring_geo: Sequence, index: GazetteerIndex,
         point_buffer: float = DEFAULT_POINT_BUFFER) -> list[str]:
    """Ids of entities satisfying both criteria, most popular first (id breaks ties)."""
    text = _label_text(label)
    if not text or not index.entities:
        return []
    ring = [(float(x), float(y)) for x, y in ring_geo]
    found = [
        eid for eid in index.candidates(geometry.bbox(ring), max(point_buffer, geometry.BOUNDARY_TOL))
        if entity_matches(text, ring, index.entities[eid], point_buffer)
    ]
    return _ordered(index, found)


class EntityLinker(BaseEstimator):
    """Estimator wrapper: ``fit`` indexes entities, ``predict`` links (label, ring) pairs."""

    def __init__(self, cell_size: float = DEFAULT_CELL_SIZE, point_buffer: float = DEFAULT_POINT_BUFFER):
        self.cell_size = cell_size
        self.point_buffer = point_buffer

    def fit(self, X, y=None):
        if self.point_buffer < 0:
            raise InputError("point_buffer must be non-negative")
        self.index_ = X if isinstance(X, GazetteerIndex) else GazetteerIndex(X, cell_size=self.cell_size)
        return self

    def predict(self, X) -> list[list[str]]:
        check_is_fitted(self, "index_")
        return [link(label, ring, self.index_, self.point_buffer) for label, ring in X]
