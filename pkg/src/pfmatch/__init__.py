"""Probabilistic map-matching of GPS trajectories with a particle filter."""

from .geo import GeoPoint, LocalProjection, PlanarPoint, make_projection
from .pf import (
    CandidatePath,
    FilterParams,
    MatchResult,
    MatchingError,
    exact_posterior,
    run_filter,
)
from .roadnet import (
    Edge,
    NetworkPosition,
    Node,
    RoadNetwork,
    build_network,
    load_network_geojson,
)
from .simulate import GroundTruth, SimConfig, path_overlap, simulate
from .trajectory import GpsPoint, Trajectory, parse_trajectory

__all__ = [
    "CandidatePath",
    "Edge",
    "FilterParams",
    "GeoPoint",
    "GpsPoint",
    "GroundTruth",
    "LocalProjection",
    "MatchResult",
    "MatchingError",
    "NetworkPosition",
    "Node",
    "PlanarPoint",
    "RoadNetwork",
    "SimConfig",
    "Trajectory",
    "build_network",
    "exact_posterior",
    "load_network_geojson",
    "make_projection",
    "parse_trajectory",
    "path_overlap",
    "run_filter",
    "simulate",
]

__version__ = "0.1.0"
