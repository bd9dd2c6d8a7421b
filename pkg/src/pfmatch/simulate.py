"""Synthetic ground truth: random on-network drives with noisy GPS output.

The simulator shares the network kinematics (and U-turn policy) with the
matcher's transition model, so differences measured downstream come from
inference quality rather than from mismatched motion models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint, normalize_bearing, unproject, PlanarPoint
from .roadnet import (
    EdgeId,
    NetworkPosition,
    RoadNetwork,
    advance,
    heading_at,
    position_to_planar,
)
from .trajectory import GpsPoint, Trajectory


@dataclass(frozen=True)
class SimConfig:
    speed: float = 10.0
    duration: float = 200.0
    sample_interval: float = 1.0
    noise_sigma: float = 5.0
    bearing_noise_sigma: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.sample_interval <= 0:
            raise ValueError("sample_interval must be positive")
        if self.duration < 2 * self.sample_interval:
            raise ValueError("duration must cover at least two sample intervals")
        if self.noise_sigma < 0 or self.bearing_noise_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")


@dataclass(frozen=True)
class GroundTruth:
    """True path and per-sample positions behind a simulated trajectory."""

    path: tuple[EdgeId, ...]
    positions: tuple[NetworkPosition, ...]
    truncated: bool = False


def _random_start(net: RoadNetwork, rng: np.random.Generator) -> NetworkPosition:
    # Uniform over total network length: edge by length, offset uniform.
    edge_ids = sorted(net.edges)
    lengths = np.array([net.edges[e].length for e in edge_ids])
    eid = edge_ids[rng.choice(len(edge_ids), p=lengths / lengths.sum())]
    return NetworkPosition(eid, float(rng.uniform(0.0, net.edges[eid].length)))


def simulate(
    net: RoadNetwork, cfg: SimConfig, rng: np.random.Generator
) -> tuple[Trajectory, GroundTruth]:
    """Drive a vehicle at constant speed and emit noisy GPS samples.

    Every ``sample_interval`` seconds the true position is perturbed by
    per-axis Gaussian noise and the local heading by bearing noise. A walk
    that runs into a dead end is truncated there and flagged.
    """
    pos = _random_start(net, rng)
    path: list[EdgeId] = [pos.edge]
    positions: list[NetworkPosition] = [pos]
    truncated = False

    n_samples = int(math.floor(cfg.duration / cfg.sample_interval)) + 1
    step_dist = cfg.speed * cfg.sample_interval
    for _ in range(n_samples - 1):
        step = advance(net, pos, step_dist, rng)
        if step.traversed:
            path.extend(step.traversed[1:])
            path.append(step.end.edge)
        pos = step.end
        positions.append(pos)
        if step.hit_dead_end:
            truncated = True
            break

    if len(positions) < 2:
        raise ValueError("simulation too short to form a trajectory")

    points = []
    for k, p in enumerate(positions):
        x, y = position_to_planar(net, p)
        if cfg.noise_sigma > 0:
            x += rng.normal(0.0, cfg.noise_sigma)
            y += rng.normal(0.0, cfg.noise_sigma)
        brg = heading_at(net, p)
        if cfg.bearing_noise_sigma > 0:
            brg = float(normalize_bearing(brg + rng.normal(0.0, cfg.bearing_noise_sigma)))
        points.append(
            GpsPoint(
                position=unproject(net.projection, PlanarPoint(x, y)),
                bearing=brg,
                timestamp=k * cfg.sample_interval,
            )
        )
    return Trajectory(tuple(points)), GroundTruth(tuple(path), tuple(positions), truncated)


def path_overlap(
    predicted: tuple[EdgeId, ...] | list[EdgeId],
    truth: tuple[EdgeId, ...] | list[EdgeId],
    net: RoadNetwork,
) -> float:
    """Length-weighted multiset overlap of a predicted path with the truth.

    Returns (length of edges common to both, counted with multiplicity)
    divided by the total truth length.
    """
    if not truth:
        raise ValueError("empty truth path")
    pred_counts: dict[EdgeId, int] = {}
    for e in predicted:
        pred_counts[e] = pred_counts.get(e, 0) + 1
    truth_counts: dict[EdgeId, int] = {}
    for e in truth:
        truth_counts[e] = truth_counts.get(e, 0) + 1
    shared = 0.0
    for e, c in truth_counts.items():
        if e in pred_counts:
            shared += min(c, pred_counts[e]) * net.edges[e].length
    total = sum(c * net.edges[e].length for e, c in truth_counts.items())
    return shared / total
