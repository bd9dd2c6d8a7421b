"""Directed road-network graph with planar geometry and a grid spatial index.

A network is built once, validated, and then shared read-only. All planar
math happens in the network's own projection (anchored at the bounding-box
centroid), so positions, radii and likelihood distances all live in one
consistent frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geo import (
    GeoPoint,
    LocalProjection,
    PlanarPoint,
    _segment_closest,
    make_projection,
    project,
    unproject,
)

NodeId = int
EdgeId = int

DEFAULT_GRID_CELL_M = 50.0
# Endpoints closer than this are considered the same intersection.
NODE_SNAP_TOLERANCE_M = 0.5
# Edge length must match its geometry within this relative tolerance.
LENGTH_RTOL = 1e-3


class NetworkBuildError(ValueError):
    """Aggregated validation failures raised while building a network."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid road network:\n  " + "\n  ".join(self.problems))


class DisconnectedPathError(ValueError):
    """An edge sequence is not a connected chain."""

    def __init__(self, break_index: int, message: str):
        self.break_index = break_index
        super().__init__(message)


@dataclass(frozen=True, slots=True)
class Node:
    id: NodeId
    location: GeoPoint


@dataclass(slots=True)
class Edge:
    """One directed road segment.

    ``length`` is computed from the geometry at build time; a pre-set
    positive value is validated against the geometry instead. Two-way
    streets appear as a pair of edges linked through ``reverse_of``.
    """

    id: EdgeId
    from_node: NodeId
    to_node: NodeId
    geometry: tuple[GeoPoint, ...]
    length: float = 0.0
    reverse_of: EdgeId | None = None


@dataclass(frozen=True, slots=True)
class NetworkPosition:
    """A point on the network: a directed edge and meters from its start."""

    edge: EdgeId
    offset: float


@dataclass(frozen=True, slots=True)
class NetworkStep:
    """Outcome of moving along the network.

    ``traversed`` lists, in order, the edges fully exited during the move;
    the current edge is ``end.edge``. ``hit_dead_end`` marks a move that
    ran out of road before its distance budget.
    """

    end: NetworkPosition
    traversed: tuple[EdgeId, ...]
    hit_dead_end: bool = False


class _EdgePlanar:
    """Projected polyline of an edge plus cumulative-length bookkeeping."""

    __slots__ = ("xs", "ys", "cum", "headings", "length")

    def __init__(self, xs: np.ndarray, ys: np.ndarray):
        self.xs = xs
        self.ys = ys
        seg = np.hypot(np.diff(xs), np.diff(ys))
        self.cum = np.concatenate(([0.0], np.cumsum(seg)))
        self.headings = np.degrees(np.arctan2(np.diff(xs), np.diff(ys))) % 360.0
        self.length = float(self.cum[-1])

    def segment_at(self, offset: float) -> int:
        i = int(np.searchsorted(self.cum, offset, side="right")) - 1
        return min(max(i, 0), len(self.cum) - 2)

    def point_at(self, offset: float) -> tuple[float, float]:
        i = self.segment_at(offset)
        seg_len = self.cum[i + 1] - self.cum[i]
        t = 0.0 if seg_len <= 0.0 else (offset - self.cum[i]) / seg_len
        return (
            self.xs[i] + t * (self.xs[i + 1] - self.xs[i]),
            self.ys[i] + t * (self.ys[i + 1] - self.ys[i]),
        )


class _SpatialGrid:
    """Uniform grid over projected edge segments.

    Each segment is registered in every cell its bounding box overlaps, so
    any segment within radius r of a query point is guaranteed to be found
    among the cells covering the query disk's bounding square.
    """

    def __init__(self, cell_size: float):
        if cell_size <= 0:
            raise ValueError("grid cell size must be positive")
        self.cell_size = cell_size
        self.cells: dict[tuple[int, int], list[tuple[EdgeId, int]]] = {}

    def _key(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.cell_size), math.floor(y / self.cell_size))

    def insert_edge(self, edge_id: EdgeId, planar: _EdgePlanar) -> None:
        for i in range(len(planar.xs) - 1):
            x0, x1 = sorted((planar.xs[i], planar.xs[i + 1]))
            y0, y1 = sorted((planar.ys[i], planar.ys[i + 1]))
            kx0, ky0 = self._key(x0, y0)
            kx1, ky1 = self._key(x1, y1)
            for kx in range(kx0, kx1 + 1):
                for ky in range(ky0, ky1 + 1):
                    self.cells.setdefault((kx, ky), []).append((edge_id, i))

    def candidates(self, x: float, y: float, r: float) -> set[tuple[EdgeId, int]]:
        kx0, ky0 = self._key(x - r, y - r)
        kx1, ky1 = self._key(x + r, y + r)
        found: set[tuple[EdgeId, int]] = set()
        for kx in range(kx0, kx1 + 1):
            for ky in range(ky0, ky1 + 1):
                entries = self.cells.get((kx, ky))
                if entries:
                    found.update(entries)
        return found


@dataclass
class RoadNetwork:
    nodes: dict[NodeId, Node]
    edges: dict[EdgeId, Edge]
    out_adjacency: dict[NodeId, list[EdgeId]]
    projection: LocalProjection
    grid: _SpatialGrid
    planar: dict[EdgeId, _EdgePlanar] = field(repr=False, default_factory=dict)

    def total_length(self) -> float:
        return sum(e.length for e in self.edges.values())


def build_network(
    nodes: Iterable[Node],
    edges: Iterable[Edge],
    grid_cell: float = DEFAULT_GRID_CELL_M,
) -> RoadNetwork:
    """Validate inputs and assemble the network with adjacency and index.

    All validation failures are collected and raised together so a broken
    input file reports every problem at once.
    """
    node_map = {n.id: n for n in nodes}
    edge_list = list(edges)
    problems: list[str] = []

    if not node_map:
        raise NetworkBuildError(["network has no nodes"])
    if len(node_map) != len(set(node_map)):
        problems.append("duplicate node ids")

    seen_edges: set[EdgeId] = set()
    for e in edge_list:
        if e.id in seen_edges:
            problems.append(f"duplicate edge id {e.id}")
        seen_edges.add(e.id)

    lats = [n.location.lat for n in node_map.values()]
    lons = [n.location.lon for n in node_map.values()]
    origin = GeoPoint(0.5 * (min(lats) + max(lats)), 0.5 * (min(lons) + max(lons)))
    projection = make_projection(origin)

    grid = _SpatialGrid(grid_cell)
    planar_map: dict[EdgeId, _EdgePlanar] = {}
    built_edges: dict[EdgeId, Edge] = {}
    adjacency: dict[NodeId, list[EdgeId]] = {nid: [] for nid in node_map}

    for e in edge_list:
        if len(e.geometry) < 2:
            problems.append(f"edge {e.id}: geometry needs at least 2 points")
            continue
        missing = [nid for nid in (e.from_node, e.to_node) if nid not in node_map]
        if missing:
            problems.append(f"edge {e.id}: references missing node(s) {missing}")
            continue

        pts = [project(projection, g) for g in e.geometry]
        planar = _EdgePlanar(
            np.array([p.x for p in pts]), np.array([p.y for p in pts])
        )
        if planar.length <= 0.0:
            problems.append(f"edge {e.id}: zero-length geometry")
            continue
        if e.length > 0.0 and abs(e.length - planar.length) > LENGTH_RTOL * planar.length:
            problems.append(
                f"edge {e.id}: declared length {e.length:.3f} m does not match "
                f"geometry length {planar.length:.3f} m"
            )
            continue

        for nid, end_pt in ((e.from_node, pts[0]), (e.to_node, pts[-1])):
            node_pt = project(projection, node_map[nid].location)
            gap = math.hypot(node_pt.x - end_pt.x, node_pt.y - end_pt.y)
            if gap > NODE_SNAP_TOLERANCE_M:
                problems.append(
                    f"edge {e.id}: geometry endpoint is {gap:.2f} m from node {nid}"
                )

        built_edges[e.id] = Edge(
            id=e.id,
            from_node=e.from_node,
            to_node=e.to_node,
            geometry=tuple(e.geometry),
            length=planar.length,
            reverse_of=e.reverse_of,
        )
        planar_map[e.id] = planar

    for e in built_edges.values():
        if e.reverse_of is None:
            continue
        rev = built_edges.get(e.reverse_of)
        if rev is None:
            problems.append(f"edge {e.id}: reverse_of references missing edge {e.reverse_of}")
        elif rev.reverse_of != e.id or rev.from_node != e.to_node or rev.to_node != e.from_node:
            problems.append(f"edge {e.id}: reverse_of link to edge {e.reverse_of} is not an involution")

    if problems:
        raise NetworkBuildError(problems)

    for eid, planar in planar_map.items():
        grid.insert_edge(eid, planar)
        adjacency[built_edges[eid].from_node].append(eid)

    # Canonical branch order: sort out-edges by departure heading (then
    # length) so behaviour is invariant under edge-id relabeling.
    for nid, eids in adjacency.items():
        eids.sort(key=lambda eid: (planar_map[eid].headings[0], planar_map[eid].length, eid))

    return RoadNetwork(
        nodes=node_map,
        edges=built_edges,
        out_adjacency=adjacency,
        projection=projection,
        grid=grid,
        planar=planar_map,
    )


def out_edges(net: RoadNetwork, node: NodeId) -> list[EdgeId]:
    """Edges leaving ``node``, in canonical (heading-sorted) order."""
    if node not in net.nodes:
        raise KeyError(f"unknown node {node}")
    return list(net.out_adjacency[node])


def edges_within_radius(
    net: RoadNetwork, p: GeoPoint, r: float
) -> list[tuple[EdgeId, NetworkPosition, float]]:
    """All edges whose closest point to ``p`` is within ``r`` meters.

    Each qualifying edge appears once with the offset of its closest point
    and that distance, sorted by ascending distance.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    q = project(net.projection, p)
    best: dict[EdgeId, tuple[float, float]] = {}
    for eid, seg in net.grid.candidates(q.x, q.y, r):
        pl = net.planar[eid]
        _, _, t, dist = _segment_closest(
            q.x, q.y, pl.xs[seg], pl.ys[seg], pl.xs[seg + 1], pl.ys[seg + 1]
        )
        prev = best.get(eid)
        if prev is None or dist < prev[0]:
            offset = pl.cum[seg] + t * (pl.cum[seg + 1] - pl.cum[seg])
            best[eid] = (dist, float(offset))
    hits = [
        (eid, NetworkPosition(eid, offset), dist)
        for eid, (dist, offset) in best.items()
        if dist <= r
    ]
    hits.sort(key=lambda h: (h[2], h[0]))
    return hits


def position_to_point(net: RoadNetwork, pos: NetworkPosition) -> GeoPoint:
    """Geographic location of a network position."""
    x, y = position_to_planar(net, pos)
    return unproject(net.projection, PlanarPoint(x, y))


def position_to_planar(net: RoadNetwork, pos: NetworkPosition) -> tuple[float, float]:
    planar = net.planar.get(pos.edge)
    if planar is None:
        raise KeyError(f"unknown edge {pos.edge}")
    if not 0.0 <= pos.offset <= planar.length + 1e-6:
        raise ValueError(f"offset {pos.offset} outside edge {pos.edge} of length {planar.length}")
    return planar.point_at(min(pos.offset, planar.length))


def positions_to_planar(
    net: RoadNetwork, edge_ids: np.ndarray, offsets: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``position_to_planar`` for weight computations."""
    xs = np.empty(len(edge_ids))
    ys = np.empty(len(edge_ids))
    order = np.argsort(edge_ids, kind="stable")
    sorted_ids = edge_ids[order]
    boundaries = np.flatnonzero(np.diff(sorted_ids)) + 1
    for group in np.split(order, boundaries):
        pl = net.planar[int(edge_ids[group[0]])]
        offs = np.clip(offsets[group], 0.0, pl.length)
        seg = np.clip(np.searchsorted(pl.cum, offs, side="right") - 1, 0, len(pl.cum) - 2)
        seg_len = pl.cum[seg + 1] - pl.cum[seg]
        with np.errstate(invalid="ignore"):
            t = np.where(seg_len > 0, (offs - pl.cum[seg]) / np.where(seg_len > 0, seg_len, 1.0), 0.0)
        xs[group] = pl.xs[seg] + t * (pl.xs[seg + 1] - pl.xs[seg])
        ys[group] = pl.ys[seg] + t * (pl.ys[seg + 1] - pl.ys[seg])
    return xs, ys


def heading_at(net: RoadNetwork, pos: NetworkPosition) -> float:
    """Direction of travel at a position, degrees clockwise from north."""
    planar = net.planar[pos.edge]
    return float(planar.headings[planar.segment_at(pos.offset)])


def branch_options(net: RoadNetwork, edge: EdgeId, allow_uturn: bool = False) -> list[EdgeId]:
    """Edges a traveller leaving ``edge`` may turn onto at its end node.

    The reverse of the edge just traversed is excluded unless it is the
    only way out (or ``allow_uturn`` is set). Empty result means dead end.
    """
    e = net.edges[edge]
    options = net.out_adjacency[e.to_node]
    if not allow_uturn and e.reverse_of is not None and len(options) > 1:
        options = [o for o in options if o != e.reverse_of]
    return options


def advance(
    net: RoadNetwork,
    pos: NetworkPosition,
    dist: float,
    rng: np.random.Generator,
    *,
    allow_uturn: bool = False,
) -> NetworkStep:
    """Move ``dist`` meters along the directed network from ``pos``.

    At each intersection the next edge is drawn uniformly among the
    branch options (see :func:`branch_options`). A dead end absorbs the
    remaining budget and is flagged rather than raised.
    """
    if dist < 0:
        raise ValueError("advance distance must be nonnegative")
    edge = net.edges[pos.edge]
    offset = pos.offset
    left = dist
    traversed: list[EdgeId] = []
    while True:
        room = edge.length - offset
        if left <= room:
            return NetworkStep(NetworkPosition(edge.id, offset + left), tuple(traversed))
        left -= room
        options = branch_options(net, edge.id, allow_uturn)
        if not options:
            return NetworkStep(NetworkPosition(edge.id, edge.length), tuple(traversed), hit_dead_end=True)
        traversed.append(edge.id)
        chosen = options[rng.integers(len(options))] if len(options) > 1 else options[0]
        edge = net.edges[chosen]
        offset = 0.0


def path_geometry(net: RoadNetwork, edges: Sequence[EdgeId]) -> list[GeoPoint]:
    """Concatenated polyline of a connected edge sequence."""
    if not edges:
        raise ValueError("empty edge sequence")
    first = net.edges.get(edges[0])
    if first is None:
        raise KeyError(f"unknown edge {edges[0]}")
    polyline = list(first.geometry)
    prev = first
    for i, eid in enumerate(edges[1:], start=1):
        e = net.edges.get(eid)
        if e is None:
            raise KeyError(f"unknown edge {eid}")
        if e.from_node != prev.to_node:
            raise DisconnectedPathError(
                i, f"edges {prev.id} and {e.id} are not connected (break at index {i})"
            )
        polyline.extend(e.geometry[1:])
        prev = e
    return polyline


def load_network_geojson(
    source: str | Path | dict, grid_cell: float = DEFAULT_GRID_CELL_M
) -> RoadNetwork:
    """Load a road network from a GeoJSON FeatureCollection.

    Expected input: LineString features with integer ``id`` and boolean
    ``oneway`` properties. A two-way street expands into the edge pair
    (2*id, 2*id + 1) linked as mutual reverses; a one-way street becomes
    edge 2*id. Nodes are synthesized by snapping LineString endpoints that
    coincide within 0.5 m.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as f:
            data = json.load(f)
    else:
        data = source

    if data.get("type") != "FeatureCollection":
        raise NetworkBuildError(["expected a GeoJSON FeatureCollection"])
    features = data.get("features", [])
    if not features:
        raise NetworkBuildError(["FeatureCollection has no features"])

    problems: list[str] = []
    lines: list[tuple[int, bool, list[GeoPoint]]] = []
    for i, feat in enumerate(features):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "LineString":
            problems.append(f"feature {i}: geometry type {geom.get('type')!r} is not LineString")
            continue
        fid = props.get("id")
        oneway = props.get("oneway")
        if not isinstance(fid, int) or isinstance(fid, bool):
            problems.append(f"feature {i}: missing or non-integer property 'id'")
            continue
        if not isinstance(oneway, bool):
            problems.append(f"feature {i}: missing or non-boolean property 'oneway'")
            continue
        coords = geom.get("coordinates", [])
        if len(coords) < 2:
            problems.append(f"feature {i} (id {fid}): LineString needs at least 2 coordinates")
            continue
        try:
            pts = [GeoPoint(lat=c[1], lon=c[0]) for c in coords]
        except (ValueError, IndexError, TypeError) as exc:
            problems.append(f"feature {i} (id {fid}): bad coordinates ({exc})")
            continue
        lines.append((fid, oneway, pts))
    if problems:
        raise NetworkBuildError(problems)

    # Snap endpoints into shared nodes via a 0.5 m hash grid.
    all_lats = [p.lat for _, _, pts in lines for p in pts]
    all_lons = [p.lon for _, _, pts in lines for p in pts]
    origin = GeoPoint(0.5 * (min(all_lats) + max(all_lats)), 0.5 * (min(all_lons) + max(all_lons)))
    proj = make_projection(origin)

    node_points: list[GeoPoint] = []
    buckets: dict[tuple[int, int], list[int]] = {}

    def node_for(pt: GeoPoint) -> NodeId:
        pp = project(proj, pt)
        kx, ky = math.floor(pp.x / NODE_SNAP_TOLERANCE_M), math.floor(pp.y / NODE_SNAP_TOLERANCE_M)
        for nx in (kx - 1, kx, kx + 1):
            for ny in (ky - 1, ky, ky + 1):
                for nid in buckets.get((nx, ny), ()):
                    known = project(proj, node_points[nid])
                    if math.hypot(known.x - pp.x, known.y - pp.y) <= NODE_SNAP_TOLERANCE_M:
                        return nid
        nid = len(node_points)
        node_points.append(pt)
        buckets.setdefault((kx, ky), []).append(nid)
        return nid

    edges: list[Edge] = []
    for fid, oneway, pts in lines:
        a = node_for(pts[0])
        b = node_for(pts[-1])
        fwd_id = 2 * fid
        if oneway:
            edges.append(Edge(id=fwd_id, from_node=a, to_node=b, geometry=tuple(pts)))
        else:
            rev_id = 2 * fid + 1
            edges.append(
                Edge(id=fwd_id, from_node=a, to_node=b, geometry=tuple(pts), reverse_of=rev_id)
            )
            edges.append(
                Edge(
                    id=rev_id,
                    from_node=b,
                    to_node=a,
                    geometry=tuple(reversed(pts)),
                    reverse_of=fwd_id,
                )
            )

    nodes = [Node(id=i, location=pt) for i, pt in enumerate(node_points)]
    return build_network(nodes, edges, grid_cell=grid_cell)
