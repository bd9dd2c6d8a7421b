import numpy as np
import pytest

from pfmatch.geo import GeoPoint, PlanarPoint, make_projection, unproject
from pfmatch.roadnet import Edge, Node, RoadNetwork, build_network
from pfmatch.trajectory import GpsPoint, Trajectory

ANCHOR = GeoPoint(51.5, -0.12)


def meters_to_geo(x: float, y: float, anchor: GeoPoint = ANCHOR) -> GeoPoint:
    return unproject(make_projection(anchor), PlanarPoint(x, y))


def planar_network(
    node_xy: dict[int, tuple[float, float]],
    edge_spec: list[tuple],
    grid_cell: float = 50.0,
) -> RoadNetwork:
    """Build a network from local-meter coordinates.

    ``edge_spec`` rows are (id, from, to[, waypoints_xy[, reverse_of]]);
    geometry runs from the from-node through any waypoints to the to-node.
    """
    nodes = [Node(i, meters_to_geo(*xy)) for i, xy in node_xy.items()]
    edges = []
    for row in edge_spec:
        eid, u, v = row[0], row[1], row[2]
        waypoints = row[3] if len(row) > 3 else []
        rev = row[4] if len(row) > 4 else None
        geom = [meters_to_geo(*node_xy[u])]
        geom += [meters_to_geo(*xy) for xy in waypoints]
        geom.append(meters_to_geo(*node_xy[v]))
        edges.append(Edge(id=eid, from_node=u, to_node=v, geometry=tuple(geom), reverse_of=rev))
    return build_network(nodes, edges, grid_cell=grid_cell)


def obs_at(net: RoadNetwork, x: float, y: float, bearing: float, timestamp: float) -> GpsPoint:
    """A GPS point placed in the network's own planar frame."""
    return GpsPoint(
        position=unproject(net.projection, PlanarPoint(x, y)),
        bearing=bearing,
        timestamp=timestamp,
    )


def obs_trajectory(net: RoadNetwork, rows: list[tuple[float, float, float, float]]) -> Trajectory:
    """Trajectory from (x, y, bearing, timestamp) rows in the network frame."""
    return Trajectory(tuple(obs_at(net, *r) for r in rows))


def two_way_pair(eid: int, u: int, v: int, waypoints=()):
    """Edge-spec rows for one two-way street as a linked pair."""
    fwd = (2 * eid, u, v, list(waypoints), 2 * eid + 1)
    rev = (2 * eid + 1, v, u, list(reversed(waypoints)), 2 * eid)
    return [fwd, rev]


@pytest.fixture(scope="session")
def y_net() -> RoadNetwork:
    from pfmatch.fixtures import y_junction_network

    return y_junction_network()


@pytest.fixture(scope="session")
def small_grid() -> RoadNetwork:
    from pfmatch.fixtures import grid_network

    return grid_network(6, 6, 100.0)


def random_planar_network(
    rng: np.random.Generator, n_nodes: int = 25, extra_edges: int = 15
) -> RoadNetwork:
    """Connected random network with straight two-way streets."""
    xy = {}
    while len(xy) < n_nodes:
        cand = (float(rng.uniform(-500, 500)), float(rng.uniform(-500, 500)))
        if all((cand[0] - x) ** 2 + (cand[1] - y) ** 2 > 25.0 for x, y in xy.values()):
            xy[len(xy)] = cand
    spec = []
    fid = 0
    # Spanning chain keeps it connected, then random chords.
    order = rng.permutation(n_nodes)
    for a, b in zip(order[:-1], order[1:]):
        spec += two_way_pair(fid, int(a), int(b))
        fid += 1
    for _ in range(extra_edges):
        a, b = rng.choice(n_nodes, size=2, replace=False)
        spec += two_way_pair(fid, int(a), int(b))
        fid += 1
    return planar_network(xy, spec)
