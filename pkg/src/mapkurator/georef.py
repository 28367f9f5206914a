"""Affine georeferencing from ground control points."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DegenerateGeometryError,
    FormatError,
    InputError,
    InsufficientControlError,
    UnsupportedMethodError,
)

SINGULAR_RTOL = 1e-12
SUPPORTED_METHODS = ("affine",)


@dataclass(frozen=True)
class GroundControlPoint:
    px: float
    py: float
    lon: float
    lat: float

    def __post_init__(self):
        vals = (self.px, self.py, self.lon, self.lat)
        if not all(math.isfinite(float(v)) for v in vals):
            raise InputError(f"non-finite ground control point {vals}")
        if not -180.0 <= self.lon <= 180.0:
            raise InputError(f"GCP longitude {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise InputError(f"GCP latitude {self.lat} outside [-90, 90]")


@dataclass(frozen=True)
class AffineTransform:
    """``lon = a + b*px + c*py`` and ``lat = d + e*px + f*py``."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    @property
    def determinant(self) -> float:
        return self.b * self.f - self.c * self.e

    def as_tuple(self) -> tuple[float, ...]:
        return (self.a, self.b, self.c, self.d, self.e, self.f)

    def inverse(self) -> "AffineTransform":
        det = self.determinant
        if det == 0.0:
            raise DegenerateGeometryError("affine transform is singular")
        ib, ic = self.f / det, -self.c / det
        ie, if_ = -self.e / det, self.b / det
        return AffineTransform(
            a=-(ib * self.a + ic * self.d), b=ib, c=ic,
            d=-(ie * self.a + if_ * self.d), e=ie, f=if_,
        )

    def __call__(self, x, y):
        return self.a + self.b * x + self.c * y, self.d + self.e * x + self.f * y


def _solve_pivoting(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting; ``rhs`` may hold several columns."""
    m = m.astype(float).copy()
    rhs = rhs.astype(float).copy()
    n = m.shape[0]
    scale = np.abs(m).max()
    if scale == 0.0:
        raise DegenerateGeometryError("normal-equation matrix is zero")
    for k in range(n):
        p = k + int(np.argmax(np.abs(m[k:, k])))
        if abs(m[p, k]) <= SINGULAR_RTOL * scale:
            raise DegenerateGeometryError("control points are collinear (singular normal equations)")
        if p != k:
            m[[k, p]] = m[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        for i in range(k + 1, n):
            factor = m[i, k] / m[k, k]
            m[i, k:] -= factor * m[k, k:]
            rhs[i] -= factor * rhs[k]
    x = np.zeros_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - m[k, k + 1:] @ x[k + 1:]) / m[k, k]
    return x


def _as_gcp_array(gcps) -> np.ndarray:
    if isinstance(gcps, np.ndarray):
        arr = np.asarray(gcps, dtype=float)
    else:
        arr = np.array(
            [(g.px, g.py, g.lon, g.lat) if isinstance(g, GroundControlPoint) else tuple(g) for g in gcps],
            dtype=float,
        ).reshape(-1, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise InputError("ground control points must be (px, py, lon, lat) rows")
    return arr


def fit_affine(gcps) -> AffineTransform:
    """Least-squares affine fit, solved separately for the lon and lat rows.

    Pixel coordinates are centred and scaled before forming the 3x3 normal
    equations, which keeps them well conditioned for maps thousands of
    pixels wide; three non-collinear points are interpolated exactly.
    """
    arr = _as_gcp_array(gcps)
    if len(arr) < 3:
        raise InsufficientControlError(f"an affine fit needs >= 3 control points, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise InputError("control points contain non-finite values")
    px, py, geo = arr[:, 0], arr[:, 1], arr[:, 2:]
    mx, my = px.mean(), py.mean()
    s = max(np.abs(px - mx).max(), np.abs(py - my).max())
    if s == 0.0:
        raise DegenerateGeometryError("all control points share one pixel location")
    design = np.column_stack([np.ones_like(px), (px - mx) / s, (py - my) / s])
    beta = _solve_pivoting(design.T @ design, design.T @ geo)
    b, e = beta[1] / s
    c, f = beta[2] / s
    a = beta[0, 0] - b * mx - c * my
    d = beta[0, 1] - e * mx - f * my
    t = AffineTransform(float(a), float(b), float(c), float(d), float(e), float(f))
    if t.determinant == 0.0:
        raise DegenerateGeometryError("fitted transform is singular")
    return t


def apply(t: AffineTransform, ring_px) -> list[tuple[float, float]]:
    """Map pixel vertices to ``(lon, lat)``; count and order are preserved."""
    pts = np.asarray(ring_px, dtype=float).reshape(-1, 2)
    lon, lat = t(pts[:, 0], pts[:, 1])
    return list(zip(lon.tolist(), lat.tolist()))


def residual_rmse(t: AffineTransform, gcps) -> float:
    """Root-mean-square Euclidean residual in degrees."""
    arr = _as_gcp_array(gcps)
    if len(arr) == 0:
        raise InputError("residual_rmse needs at least one control point")
    lon, lat = t(arr[:, 0], arr[:, 1])
    sq = (lon - arr[:, 2]) ** 2 + (lat - arr[:, 3]) ** 2
    return float(np.sqrt(sq.mean()))


def load_gcp_metadata(path) -> list[GroundControlPoint]:
    """Read ``{"method": "affine", "gcps": [{"px", "py", "lon", "lat"}, ...]}``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: GCP metadata is not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: GCP metadata must be a JSON object")
    method = doc.get("method", "affine")
    if method not in SUPPORTED_METHODS:
        raise UnsupportedMethodError(f"{path}: unsupported transformation method {method!r}")
    try:
        return [GroundControlPoint(float(g["px"]), float(g["py"]), float(g["lon"]), float(g["lat"]))
                for g in doc["gcps"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise FormatError(f"{path}: malformed GCP list ({exc})") from exc


def write_gcp_metadata(gcps: Sequence[GroundControlPoint], path, method: str = "affine") -> None:
    doc = {"method": method,
           "gcps": [{"px": g.px, "py": g.py, "lon": g.lon, "lat": g.lat} for g in gcps]}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


class AffineGeoreferencer(BaseEstimator, TransformerMixin):
    """Pixel -> lon/lat transformer fitted from ground control points.

    ``fit`` accepts a list of :class:`GroundControlPoint` or an ``(n, 4)``
    array of ``px, py, lon, lat`` rows. ``transform`` maps an ``(n, 2)``
    pixel array to ``(n, 2)`` lon/lat.
    """

    def __init__(self, method: str = "affine"):
        self.method = method

    def fit(self, X, y=None):
        if self.method not in SUPPORTED_METHODS:
            raise UnsupportedMethodError(f"unsupported transformation method {self.method!r}")
        self.transform_ = fit_affine(X)
        self.rmse_ = residual_rmse(self.transform_, X)
        self.n_control_points_ = len(_as_gcp_array(X))
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        X = check_array(X, dtype=float)
        return np.column_stack(self.transform_(X[:, 0], X[:, 1]))

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        X = check_array(X, dtype=float)
        return np.column_stack(self.transform_.inverse()(X[:, 0], X[:, 1]))
