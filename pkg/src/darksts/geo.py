"""Geodesic primitives: great-circle distance, local tangent-plane offsets,
and point-in-footprint tests.

All spatial reasoning in this package runs on a sphere of mean radius
6,371,008.8 m. Ellipsoidal corrections are below 0.5% and irrelevant at the
500 m decision thresholds used downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegeneratePolygon, OutOfRange

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_DEGREE = math.pi * EARTH_RADIUS_M / 180.0

# Tangent-plane offsets are only meaningful near their origin.
MAX_OFFSET_RANGE_M = 100_000.0


def wrap_lon(lon: float) -> float:
    """Normalize a longitude to [-180, 180).

    In-range values are returned unchanged so normalization never
    re-rounds a coordinate that is already canonical.
    """
    if -180.0 <= lon < 180.0:
        return lon
    w = math.fmod(lon + 180.0, 360.0)
    if w < 0.0:
        w += 360.0
    return w - 180.0


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 position. Longitude is normalized at construction."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not math.isfinite(self.lon):
            raise OutOfRange(f"invalid coordinates ({self.lat}, {self.lon})")
        object.__setattr__(self, "lon", wrap_lon(self.lon))


@dataclass(frozen=True)
class LocalOffset:
    """East/north meters in the tangent plane at some origin."""

    east: float
    north: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.east, self.north)


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    return haversine_m(a.lat, a.lon, b.lat, b.lon)


def haversine_m(lat1, lon1, lat2, lon2):
    """Haversine distance in meters on raw coordinate values.

    Accepts scalars or numpy arrays (broadcast like numpy ufuncs).
    """
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    h = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    if np.ndim(d) == 0:
        return float(d)
    return d


def local_offset(origin: GeoPoint, p: GeoPoint) -> LocalOffset:
    """Equirectangular offset of p relative to origin, in meters.

    Valid only within MAX_OFFSET_RANGE_M of the origin.
    """
    d = haversine_distance(origin, p)
    if d >= MAX_OFFSET_RANGE_M:
        raise OutOfRange(f"point {d:.0f} m from origin; tangent plane valid below "
                         f"{MAX_OFFSET_RANGE_M:.0f} m")
    dlon = wrap_lon(p.lon - origin.lon)
    east = dlon * math.cos(math.radians(origin.lat)) * METERS_PER_DEGREE
    north = (p.lat - origin.lat) * METERS_PER_DEGREE
    return LocalOffset(east, north)


def offset_to_geo(offset: LocalOffset, origin: GeoPoint) -> GeoPoint:
    """Inverse of local_offset: the point at the given east/north offset."""
    lat = origin.lat + offset.north / METERS_PER_DEGREE
    lon = origin.lon + offset.east / (METERS_PER_DEGREE * math.cos(math.radians(origin.lat)))
    return GeoPoint(lat, lon)


def _on_segment(px, py, x1, y1, x2, y2) -> bool:
    """Whether (px, py) lies on the closed segment (x1,y1)-(x2,y2)."""
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    scale = max(abs(x2 - x1), abs(y2 - y1), 1e-300)
    if abs(cross) > 1e-12 * scale:
        return False
    return (min(x1, x2) - 1e-15 <= px <= max(x1, x2) + 1e-15
            and min(y1, y2) - 1e-15 <= py <= max(y1, y2) + 1e-15)


def point_in_footprint(p: GeoPoint, footprint: Sequence[GeoPoint]) -> bool:
    """Ray-casting containment test; boundary points count as inside.

    The footprint must be a simple polygon (>= 3 vertices, nonzero area)
    that does not straddle the antimeridian.
    """
    n = len(footprint)
    if n < 3:
        raise DegeneratePolygon(f"footprint has {n} vertices")
    xs = [v.lon for v in footprint]
    ys = [v.lat for v in footprint]
    area2 = 0.0
    for i in range(n):
        j = (i + 1) % n
        area2 += xs[i] * ys[j] - xs[j] * ys[i]
    if area2 == 0.0:
        raise DegeneratePolygon("footprint has zero area")

    px, py = p.lon, p.lat
    inside = False
    for i in range(n):
        j = (i + 1) % n
        x1, y1, x2, y2 = xs[i], ys[i], xs[j], ys[j]
        if _on_segment(px, py, x1, y1, x2, y2):
            return True
        if (y1 > py) != (y2 > py):
            x_cross = x1 + (x2 - x1) * (py - y1) / (y2 - y1)
            if px < x_cross:
                inside = not inside
    return inside
