"""GPS trajectory model, CSV I/O, and dataset-degradation operations."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint, make_projection

CSV_HEADER = ["timestamp", "lat", "lon", "bearing"]


class TrajectoryParseError(ValueError):
    """CSV parsing/validation failure with per-row diagnostics."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid trajectory:\n  " + "\n  ".join(problems))


@dataclass(frozen=True, slots=True)
class GpsPoint:
    """One timestamped observation: position, heading and epoch seconds."""

    position: GeoPoint
    bearing: float
    timestamp: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.bearing) or not 0.0 <= self.bearing < 360.0:
            raise ValueError(f"bearing {self.bearing} outside [0, 360)")
        if not math.isfinite(self.timestamp):
            raise ValueError("non-finite timestamp")


@dataclass(frozen=True)
class Trajectory:
    points: tuple[GpsPoint, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("a trajectory needs at least 2 points")
        for i in range(1, len(self.points)):
            if self.points[i].timestamp <= self.points[i - 1].timestamp:
                raise ValueError(
                    f"timestamps not strictly increasing at index {i} "
                    f"({self.points[i - 1].timestamp} -> {self.points[i].timestamp})"
                )

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class HoldoutSplit:
    """Train/test partition of a trajectory; test keeps original indices."""

    train: Trajectory
    test: tuple[tuple[int, GpsPoint], ...]


def parse_trajectory(text: str) -> Trajectory:
    """Parse the trajectory CSV format (header ``timestamp,lat,lon,bearing``)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TrajectoryParseError(["empty input"]) from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise TrajectoryParseError(
            [f"bad header {header!r}, expected {','.join(CSV_HEADER)}"]
        )

    problems: list[str] = []
    points: list[GpsPoint] = []
    for row_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            problems.append(f"row {row_no}: expected 4 fields, got {len(row)}")
            continue
        try:
            ts, lat, lon, brg = (float(v) for v in row)
        except ValueError:
            problems.append(f"row {row_no}: non-numeric field in {row!r}")
            continue
        try:
            points.append(GpsPoint(position=GeoPoint(lat, lon), bearing=brg, timestamp=ts))
        except ValueError as exc:
            problems.append(f"row {row_no}: {exc}")
            continue
        if len(points) >= 2 and points[-1].timestamp <= points[-2].timestamp:
            problems.append(
                f"row {row_no}: timestamp {points[-1].timestamp} not after "
                f"row {row_no - 1} ({points[-2].timestamp})"
            )
    if problems:
        raise TrajectoryParseError(problems)
    if len(points) < 2:
        raise TrajectoryParseError(["fewer than 2 valid points"])
    return Trajectory(tuple(points))


def format_trajectory(traj: Trajectory) -> str:
    """Serialize to the trajectory CSV format (lossless float repr)."""
    out = [",".join(CSV_HEADER)]
    for p in traj.points:
        ts = int(p.timestamp) if p.timestamp == int(p.timestamp) else repr(float(p.timestamp))
        out.append(f"{ts},{float(p.position.lat)!r},{float(p.position.lon)!r},{float(p.bearing)!r}")
    return "\n".join(out) + "\n"


def perturb(traj: Trajectory, sigma: float, rng: np.random.Generator) -> Trajectory:
    """Displace every position by independent per-axis Gaussian noise.

    Noise is drawn in meters in a local planar frame anchored at the
    trajectory's bounding-box centroid; bearings and timestamps are kept.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return traj
    lats = [p.position.lat for p in traj.points]
    lons = [p.position.lon for p in traj.points]
    proj = make_projection(GeoPoint(0.5 * (min(lats) + max(lats)), 0.5 * (min(lons) + max(lons))))
    offsets = rng.normal(0.0, sigma, size=(len(traj.points), 2))
    points = tuple(
        GpsPoint(
            position=GeoPoint(
                lat=p.position.lat + dy / proj.meters_per_deg_lat,
                lon=p.position.lon + dx / proj.meters_per_deg_lon,
            ),
            bearing=p.bearing,
            timestamp=p.timestamp,
        )
        for p, (dx, dy) in zip(traj.points, offsets)
    )
    return Trajectory(points)


def downsample(traj: Trajectory, interval: float) -> Trajectory:
    """Thin a trajectory to roughly one point per ``interval`` seconds.

    Greedy rule: keep the first point, then each point at least
    ``interval`` seconds after the last kept one; the final point is
    always kept so the trajectory extent is preserved.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    kept = [traj.points[0]]
    for p in traj.points[1:-1]:
        if p.timestamp >= kept[-1].timestamp + interval:
            kept.append(p)
    if traj.points[-1].timestamp > kept[-1].timestamp:
        kept.append(traj.points[-1])
    if len(kept) < 2:
        raise ValueError(f"downsampling to {interval} s leaves fewer than 2 points")
    return Trajectory(tuple(kept))


def split_holdout(traj: Trajectory, fraction: float, rng: np.random.Generator) -> HoldoutSplit:
    """Remove a random fraction of points for holdout evaluation.

    floor(fraction * N) points are drawn uniformly without replacement
    from indices 1..N-1; the first point always stays in the training set
    because matching is anchored there.
    """
    if not 0.0 < fraction < 0.5:
        raise ValueError(f"holdout fraction {fraction} outside (0, 0.5)")
    n = len(traj.points)
    k = int(fraction * n)
    if n - k < 2:
        raise ValueError(f"trajectory of {n} points too short for fraction {fraction}")
    test_idx = set(rng.choice(np.arange(1, n), size=k, replace=False).tolist()) if k else set()
    train = tuple(p for i, p in enumerate(traj.points) if i not in test_idx)
    test = tuple((i, traj.points[i]) for i in sorted(test_idx))
    return HoldoutSplit(train=Trajectory(train), test=test)
