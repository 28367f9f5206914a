"""Planar ring helpers shared by the spotter, merger, linker and emitter.

Rings are implicitly closed vertex sequences: the last vertex connects back
to the first. All functions accept anything ``np.asarray`` turns into an
``(n, 2)`` array.
"""
from __future__ import annotations

import numpy as np

# Absolute slack for on-boundary tests. Linker inputs are degrees, so this is
# roughly 0.1 mm on the ground; pixel inputs never come close to it.
BOUNDARY_TOL = 1e-9


def signed_area(ring) -> float:
    """Shoelace area; positive for counterclockwise rings in a y-up frame."""
    pts = np.asarray(ring, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def centroid(ring) -> tuple[float, float]:
    """Area centroid of a simple ring, or the vertex mean when the area is zero."""
    pts = np.asarray(ring, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area2 = cross.sum()
    if abs(area2) < 1e-12:
        return float(x.mean()), float(y.mean())
    cx = float(((x + xn) * cross).sum() / (3.0 * area2))
    cy = float(((y + yn) * cross).sum() / (3.0 * area2))
    return cx, cy


def orient_ccw(ring) -> np.ndarray:
    """Return ``ring`` counterclockwise, keeping its first vertex in place."""
    pts = np.asarray(ring, dtype=float)
    if signed_area(pts) < 0:
        return np.concatenate([pts[:1], pts[:0:-1]])
    return pts


def perimeter(ring) -> float:
    pts = np.asarray(ring, dtype=float)
    return float(np.hypot(*(np.roll(pts, -1, axis=0) - pts).T).sum())


def bbox(ring) -> tuple[float, float, float, float]:
    """``(min_x, min_y, max_x, max_y)`` of the vertices."""
    pts = np.asarray(ring, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def point_segment_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return float(np.hypot(px - ax, py - ay))
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / length2))
    return float(np.hypot(px - (ax + t * dx), py - (ay + t * dy)))


def distance_to_boundary(p, ring) -> float:
    pts = np.asarray(ring, dtype=float)
    n = len(pts)
    return min(point_segment_distance(p, pts[i], pts[(i + 1) % n]) for i in range(n))


def point_in_ring(p, ring) -> bool:
    """Even-odd ray casting; points on the boundary count as inside."""
    x, y = float(p[0]), float(p[1])
    pts = np.asarray(ring, dtype=float)
    n = len(pts)
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = pts[i]
        xj, yj = pts[j]
        if point_segment_distance((x, y), (xi, yi), (xj, yj)) <= BOUNDARY_TOL:
            return True
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def _orientation(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_cross(p1, p2, q1, q2) -> bool:
    """True when the closed segments p1-p2 and q1-q2 share at least one point."""
    d1 = _orientation(q1, q2, p1)
    d2 = _orientation(q1, q2, p2)
    d3 = _orientation(p1, p2, q1)
    d4 = _orientation(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    # touching / collinear cases
    if point_segment_distance(p1, q1, q2) <= BOUNDARY_TOL:
        return True
    if point_segment_distance(p2, q1, q2) <= BOUNDARY_TOL:
        return True
    if point_segment_distance(q1, p1, p2) <= BOUNDARY_TOL:
        return True
    return point_segment_distance(q2, p1, p2) <= BOUNDARY_TOL


def rings_intersect(a, b) -> bool:
    """Non-empty intersection of two closed simple rings (interiors included)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ax0, ay0, ax1, ay1 = bbox(a)
    bx0, by0, bx1, by1 = bbox(b)
    tol = BOUNDARY_TOL
    if ax1 < bx0 - tol or bx1 < ax0 - tol or ay1 < by0 - tol or by1 < ay0 - tol:
        return False
    if any(point_in_ring(p, b) for p in a):
        return True
    if any(point_in_ring(p, a) for p in b):
        return True
    na, nb = len(a), len(b)
    for i in range(na):
        p1, p2 = a[i], a[(i + 1) % na]
        for j in range(nb):
            if segments_cross(p1, p2, b[j], b[(j + 1) % nb]):
                return True
    return False
