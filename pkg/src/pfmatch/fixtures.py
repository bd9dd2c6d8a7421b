"""Synthetic road networks used by the test-suite, docs and demo scripts.

Layouts are designed in local meters around an anchor and emitted as the
GeoJSON interchange format, so constructing them also exercises the
network loader (one-way expansion, endpoint snapping).
"""

from __future__ import annotations

from .geo import GeoPoint, PlanarPoint, make_projection, unproject
from .roadnet import RoadNetwork, load_network_geojson

ANCHOR = GeoPoint(51.5074, -0.1278)


def _feature(fid: int, oneway: bool, coords: list[tuple[float, float]]) -> dict:
    proj = make_projection(ANCHOR)
    lonlat = []
    for x, y in coords:
        g = unproject(proj, PlanarPoint(x, y))
        lonlat.append([g.lon, g.lat])
    return {
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": lonlat},
        "properties": {"id": fid, "oneway": oneway},
    }


def y_junction_geojson() -> dict:
    """A one-way stem that forks into two mirror-image branches.

    The branches jog 10 m to each side of the stem axis and then run
    parallel to it, so an observation on the axis is equidistant from
    both and an off-axis observation separates them by a fixed margin.
    Branch tips are dead ends.
    """
    features = [
        _feature(1, True, [(0.0, -100.0), (0.0, 0.0)]),
        _feature(2, True, [(0.0, 0.0), (-10.0, 10.0), (-10.0, 110.0)]),
        _feature(3, True, [(0.0, 0.0), (10.0, 10.0), (10.0, 110.0)]),
    ]
    return {"type": "FeatureCollection", "features": features}


# Edge ids assigned by the loader to the fixture's one-way features.
Y_STEM = 2
Y_LEFT = 4
Y_RIGHT = 6


def grid_geojson(rows: int = 20, cols: int = 20, block: float = 100.0) -> dict:
    """A rows x cols Manhattan grid of two-way streets."""
    if rows < 2 or cols < 2:
        raise ValueError("grid needs at least 2x2 intersections")
    features = []
    fid = 0
    for j in range(rows):
        for i in range(cols):
            x, y = i * block, j * block
            if i + 1 < cols:
                features.append(_feature(fid, False, [(x, y), (x + block, y)]))
                fid += 1
            if j + 1 < rows:
                features.append(_feature(fid, False, [(x, y), (x, y + block)]))
                fid += 1
    return {"type": "FeatureCollection", "features": features}


def y_junction_network() -> RoadNetwork:
    return load_network_geojson(y_junction_geojson())


def grid_network(rows: int = 20, cols: int = 20, block: float = 100.0) -> RoadNetwork:
    return load_network_geojson(grid_geojson(rows, cols, block))
