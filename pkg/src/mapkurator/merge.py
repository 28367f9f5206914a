"""Patch-to-map merging: shift patch detections into map pixels and drop duplicates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from . import geometry
from ._validation import check_unit_interval
from .raster import PatchWindow
from .spotter import TextDetection

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class MergedDetection:
    polygon_map_px: tuple[tuple[float, float], ...]
    text: str
    score: float
    provenance: tuple[int, int, int]

    @property
    def bbox(self):
        return geometry.bbox(self.polygon_map_px)


def to_map_coords(det: TextDetection, window: PatchWindow) -> MergedDetection:
    dx, dy = window.origin_x_px, window.origin_y_px
    return MergedDetection(
        polygon_map_px=tuple((x + dx, y + dy) for x, y in det.polygon_px),
        text=det.text,
        score=det.score,
        provenance=(det.patch_row, det.patch_col, det.seq_in_patch),
    )


def _box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def bbox_iou(a: MergedDetection, b: MergedDetection) -> float:
    """Intersection over union of the two rings' axis-aligned bounding boxes."""
    return _box_iou(a.bbox, b.bbox)


def dedupe(dets: Iterable[MergedDetection], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> list[MergedDetection]:
    """Greedy suppression of overlapping detections.

    Candidates are visited by descending score (provenance breaks ties); one
    survives when its box IoU with every survivor so far is below
    ``iou_threshold``. Text is ignored. The survivors come back in provenance
    order, so the result does not depend on input order.
    """
    iou_threshold = check_unit_interval(iou_threshold, "iou_threshold", open_low=True)
    ordered = sorted(dets, key=lambda d: (-d.score, d.provenance))
    kept: list[MergedDetection] = []
    kept_boxes = []
    for det in ordered:
        box = det.bbox
        if all(_box_iou(box, other) < iou_threshold for other in kept_boxes):
            kept.append(det)
            kept_boxes.append(box)
    return sorted(kept, key=lambda d: d.provenance)


class PatchMerger(BaseEstimator):
    """Estimator-style wrapper around :func:`to_map_coords` + :func:`dedupe`.

    Stateless; ``fit`` only validates parameters.
    """

    def __init__(self, iou_threshold: float = DEFAULT_IOU_THRESHOLD):
        self.iou_threshold = iou_threshold

    def fit(self, X=None, y=None):
        check_unit_interval(self.iou_threshold, "iou_threshold", open_low=True)
        return self

    def transform(self, X: Sequence[tuple[TextDetection, PatchWindow]]) -> list[MergedDetection]:
        return dedupe([to_map_coords(d, w) for d, w in X], self.iou_threshold)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
