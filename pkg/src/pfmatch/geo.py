"""Planar coordinate handling for borough-scale GPS work.

Everything downstream measures in meters inside a local equirectangular
projection. At the ~10 km scale of a borough the projection error is
well below 0.1%, which is far under typical GPS noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

METERS_PER_DEG_LAT = 111_132.9
METERS_PER_DEG_LON_EQUATOR = 111_319.5

# Beyond this distance from the projection origin the small-angle
# approximation stops being trustworthy.
PROJECTION_ENVELOPE_M = 100_000.0


class ProjectionEnvelopeError(ValueError):
    """Point is too far from the projection origin to project safely."""


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """WGS84 position in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True, slots=True)
class PlanarPoint:
    """Local east/north offsets from a projection origin, in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite planar point ({self.x}, {self.y})")


@dataclass(frozen=True, slots=True)
class LocalProjection:
    """Equirectangular projection anchored at ``origin``."""

    origin: GeoPoint
    meters_per_deg_lat: float
    meters_per_deg_lon: float


def make_projection(origin: GeoPoint) -> LocalProjection:
    """Build the local projection used by every planar computation.

    The longitude scale shrinks with cos(latitude); near the poles the
    projection degenerates, so origins beyond 89 degrees are rejected.
    """
    if abs(origin.lat) > 89.0:
        raise ValueError(f"projection origin latitude {origin.lat} too close to a pole")
    m_lon = METERS_PER_DEG_LON_EQUATOR * math.cos(math.radians(origin.lat))
    return LocalProjection(origin=origin, meters_per_deg_lat=METERS_PER_DEG_LAT, meters_per_deg_lon=m_lon)


def project(proj: LocalProjection, p: GeoPoint) -> PlanarPoint:
    """Map a geographic point into the projection's planar frame."""
    x = (p.lon - proj.origin.lon) * proj.meters_per_deg_lon
    y = (p.lat - proj.origin.lat) * proj.meters_per_deg_lat
    if math.hypot(x, y) > PROJECTION_ENVELOPE_M:
        raise ProjectionEnvelopeError(
            f"point ({p.lat}, {p.lon}) is {math.hypot(x, y) / 1000.0:.1f} km from the "
            f"projection origin (limit {PROJECTION_ENVELOPE_M / 1000.0:.0f} km)"
        )
    return PlanarPoint(x, y)


def unproject(proj: LocalProjection, p: PlanarPoint) -> GeoPoint:
    """Inverse of :func:`project` (exact up to float round-off)."""
    # float() keeps numpy scalars out of the domain types
    return GeoPoint(
        lat=float(proj.origin.lat + p.y / proj.meters_per_deg_lat),
        lon=float(proj.origin.lon + p.x / proj.meters_per_deg_lon),
    )


def planar_distance(a: PlanarPoint, b: PlanarPoint) -> float:
    """Euclidean distance in meters between two points of the same frame."""
    return math.hypot(a.x - b.x, a.y - b.y)


def point_segment_projection(
    p: PlanarPoint, a: PlanarPoint, b: PlanarPoint
) -> tuple[PlanarPoint, float, float]:
    """Closest point on segment ab to p.

    Returns ``(closest, t, dist)`` where ``closest = a + t*(b-a)`` with t
    clamped to [0, 1]. A degenerate segment (a == b) is treated as the
    point a with t = 0.
    """
    closest_x, closest_y, t, dist = _segment_closest(p.x, p.y, a.x, a.y, b.x, b.y)
    return PlanarPoint(closest_x, closest_y), t, dist


def _segment_closest(
    px: float, py: float, ax: float, ay: float, bx: float, by: float
) -> tuple[float, float, float, float]:
    # Scalar kernel shared with the vectorized spatial-index path.
    dx = bx - ax
    dy = by - ay
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        t = 0.0
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / seg_sq
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    cx = ax + t * dx
    cy = ay + t * dy
    return cx, cy, t, math.hypot(px - cx, py - cy)


def normalize_bearing(deg: float) -> float:
    """Wrap a heading into [0, 360).

    Plain ``% 360.0`` can round a tiny negative value up to exactly 360.0,
    which is outside the range; this guards that edge.
    """
    d = deg % 360.0
    return 0.0 if d >= 360.0 else d


def bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Heading of the displacement a -> b in degrees clockwise from north.

    Uses the longitude scale at the midpoint latitude so that
    bearing(a, b) and bearing(b, a) are exactly 180 degrees apart.
    """
    if a == b:
        raise ValueError("bearing undefined for coincident points")
    mid_lat = 0.5 * (a.lat + b.lat)
    dx = (b.lon - a.lon) * METERS_PER_DEG_LON_EQUATOR * math.cos(math.radians(mid_lat))
    dy = (b.lat - a.lat) * METERS_PER_DEG_LAT
    return normalize_bearing(math.degrees(math.atan2(dx, dy)))


def bearing_difference(a: float, b: float) -> float:
    """Absolute circular difference of two headings, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d
