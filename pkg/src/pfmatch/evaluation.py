"""Holdout validation and sensitivity sweeps.

Cross-validation removes a fraction of GPS points, matches the rest, and
scores the distance from each held-out point to the inferred path. Sweeps
repeat that over degraded copies of a trajectory (added noise or reduced
sampling rate) for both the particle filter and a deterministic
snap-and-stitch baseline.

The baseline deliberately under-implements spatio-temporal matchers: it
snaps each point to the nearest edge and stitches snaps with
distance-weighted shortest paths, ignoring timing entirely. It exists as
a deterministic reference for trend comparison, not as a faithful
reimplementation of any published matcher.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, asdict
from typing import Callable, Sequence

import numpy as np

from .geo import GeoPoint, LocalProjection, planar_distance, point_segment_projection, project
from .pf import CandidatePath, FilterParams, MatchingError, MatchResult, run_filter
from .roadnet import (
    EdgeId,
    NetworkPosition,
    RoadNetwork,
    edges_within_radius,
    path_geometry,
)
from .trajectory import GpsPoint, Trajectory, downsample, perturb, split_holdout

BASELINE_SNAP_RADIUS_M = 100.0

MATCHER_FILTER = "particle_filter"
MATCHER_BASELINE = "baseline"

AXIS_NOISE = "noise_sigma"
AXIS_INTERVAL = "sampling_interval"


class UnsnappablePointError(MatchingError):
    """A trajectory point has no edge within the baseline snap radius."""


class DisconnectedSnapError(MatchingError):
    """No network path between two consecutively snapped edges."""


@dataclass(frozen=True)
class EvalReport:
    """Held-out point errors with their percentile summary."""

    per_point_errors: tuple[tuple[int, float], ...]
    p25: float
    p50: float
    p75: float
    mean: float
    recovery_events: int
    params: FilterParams | None

    def to_json_dict(self) -> dict:
        return {
            "errors": [[i, e] for i, e in self.per_point_errors],
            "p25": self.p25,
            "p50": self.p50,
            "p75": self.p75,
            "mean": self.mean,
            "recovery_events": self.recovery_events,
            "params": asdict(self.params) if self.params is not None else None,
        }


@dataclass(frozen=True)
class SweepEntry:
    level: float
    matcher: str
    report: EvalReport | None
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    axis: str
    levels: tuple[float, ...]
    entries: tuple[SweepEntry, ...]

    def report_for(self, level: float, matcher: str) -> EvalReport | None:
        for e in self.entries:
            if e.level == level and e.matcher == matcher:
                return e.report
        return None

    def to_json_dict(self) -> dict:
        return {
            "axis": self.axis,
            "levels": list(self.levels),
            "entries": [
                {
                    "level": e.level,
                    "matcher": e.matcher,
                    "report": e.report.to_json_dict() if e.report else None,
                    "error": e.error,
                }
                for e in self.entries
            ],
        }

    def errors_csv(self) -> str:
        """Pooled per-point errors, one row per held-out point."""
        rows = ["axis,level,matcher,point_index,error_m"]
        for e in self.entries:
            if e.report is None:
                continue
            for idx, err in e.report.per_point_errors:
                rows.append(f"{self.axis},{e.level!r},{e.matcher},{idx},{err!r}")
        return "\n".join(rows) + "\n"


def distance_to_path(
    p: GpsPoint, polyline: Sequence[GeoPoint], proj: LocalProjection
) -> float:
    """Minimum planar distance from a point to a path polyline."""
    if len(polyline) == 0:
        raise ValueError("empty path polyline")
    q = project(proj, p.position)
    pts = [project(proj, g) for g in polyline]
    if len(pts) == 1:
        return planar_distance(q, pts[0])
    best = math.inf
    for a, b in zip(pts[:-1], pts[1:]):
        _, _, d = point_segment_projection(q, a, b)
        if d < best:
            best = d
    return best


def _percentiles(errors: list[float]) -> tuple[float, float, float, float]:
    arr = np.asarray(errors)
    p25, p50, p75 = np.percentile(arr, [25.0, 50.0, 75.0], method="linear")
    return float(p25), float(p50), float(p75), float(arr.mean())


def _holdout_errors(
    net: RoadNetwork,
    traj: Trajectory,
    fraction: float,
    rng: np.random.Generator,
    match: Callable[[Trajectory], tuple[Sequence[CandidatePath], int]],
    weighted: bool = False,
) -> tuple[list[tuple[int, float]], int]:
    if int(fraction * len(traj.points)) < 1:
        raise ValueError(
            f"trajectory of {len(traj.points)} points yields no held-out points at fraction {fraction}"
        )
    split = split_holdout(traj, fraction, rng)
    candidates, recoveries = match(split.train)
    if not candidates:
        raise MatchingError("matcher produced no candidate path")
    errors: list[tuple[int, float]] = []
    if weighted:
        geoms = [(c.probability, path_geometry(net, c.edges)) for c in candidates]
        for idx, point in split.test:
            err = sum(w * distance_to_path(point, g, net.projection) for w, g in geoms)
            errors.append((idx, err))
    else:
        top = candidates[0]
        geom = path_geometry(net, top.edges)
        for idx, point in split.test:
            errors.append((idx, distance_to_path(point, geom, net.projection)))
    return errors, recoveries


def crossvalidate(
    net: RoadNetwork,
    traj: Trajectory,
    params: FilterParams,
    fraction: float = 0.1,
    rng: np.random.Generator | None = None,
    *,
    weighted: bool = False,
) -> EvalReport:
    """Holdout cross-validation of the particle filter.

    Splits out ``fraction`` of the points, matches the remainder, and
    scores each held-out point against the most likely candidate path
    (or the probability-weighted candidate mixture with ``weighted``).
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)

    def match(train: Trajectory) -> tuple[Sequence[CandidatePath], int]:
        result: MatchResult = run_filter(net, train, params)
        return result.candidates, result.recovery_events

    errors, recoveries = _holdout_errors(net, traj, fraction, rng, match, weighted)
    p25, p50, p75, mean = _percentiles([e for _, e in errors])
    return EvalReport(
        per_point_errors=tuple(errors),
        p25=p25,
        p50=p50,
        p75=p75,
        mean=mean,
        recovery_events=recoveries,
        params=params,
    )


def _shortest_edge_route(net: RoadNetwork, start: EdgeId, goal: EdgeId) -> list[EdgeId]:
    """Distance-weighted shortest chain of edges connecting start to goal.

    Returns the edges strictly between ``start`` and ``goal`` (possibly
    empty when they already connect); raises when no route exists.
    """
    source = net.edges[start].to_node
    target = net.edges[goal].from_node
    if source == target:
        return []
    dist: dict[int, float] = {source: 0.0}
    back: dict[int, EdgeId] = {}
    heap: list[tuple[float, int]] = [(0.0, source)]
    visited: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in visited:
            continue
        if node == target:
            break
        visited.add(node)
        for eid in net.out_adjacency[node]:
            e = net.edges[eid]
            nd = d + e.length
            if nd < dist.get(e.to_node, math.inf):
                dist[e.to_node] = nd
                back[e.to_node] = eid
                heapq.heappush(heap, (nd, e.to_node))
    if target not in back and source != target:
        raise DisconnectedSnapError(f"no route from edge {start} to edge {goal}")
    route: list[EdgeId] = []
    node = target
    while node != source:
        eid = back[node]
        route.append(eid)
        node = net.edges[eid].from_node
    route.reverse()
    return route


def baseline_match(net: RoadNetwork, traj: Trajectory) -> CandidatePath:
    """Deterministic snap-and-stitch matcher.

    Snaps every point to its nearest edge and stitches consecutive snaps
    with shortest network routes. No randomness, no probabilities: the
    single output path carries probability 1.
    """
    snaps: list[NetworkPosition] = []
    for i, p in enumerate(traj.points):
        hits = edges_within_radius(net, p.position, BASELINE_SNAP_RADIUS_M)
        if not hits:
            raise UnsnappablePointError(
                f"point {i} has no edge within {BASELINE_SNAP_RADIUS_M} m"
            )
        snaps.append(hits[0][1])

    edges: list[EdgeId] = [snaps[0].edge]
    for prev, cur in zip(snaps[:-1], snaps[1:]):
        if cur.edge == prev.edge:
            continue
        for eid in _shortest_edge_route(net, prev.edge, cur.edge):
            if eid != edges[-1]:
                edges.append(eid)
        if cur.edge != edges[-1]:
            edges.append(cur.edge)
    return CandidatePath(edges=tuple(edges), probability=1.0, support=1)


def crossvalidate_baseline(
    net: RoadNetwork,
    traj: Trajectory,
    fraction: float = 0.1,
    rng: np.random.Generator | None = None,
) -> EvalReport:
    """Holdout cross-validation of the snap-and-stitch baseline."""
    if rng is None:
        rng = np.random.default_rng(0)

    def match(train: Trajectory) -> tuple[Sequence[CandidatePath], int]:
        return [baseline_match(net, train)], 0

    errors, _ = _holdout_errors(net, traj, fraction, rng, match)
    p25, p50, p75, mean = _percentiles([e for _, e in errors])
    return EvalReport(
        per_point_errors=tuple(errors),
        p25=p25,
        p50=p50,
        p75=p75,
        mean=mean,
        recovery_events=0,
        params=None,
    )


def sweep(
    net: RoadNetwork,
    base_traj: Trajectory,
    params: FilterParams,
    axis: str,
    levels: Sequence[float],
    trials: int = 10,
    rng: np.random.Generator | None = None,
    fraction: float = 0.1,
) -> SweepReport:
    """Degradation sweep over noise or sampling interval.

    For each level the base trajectory is degraded (extra Gaussian noise
    for the noise axis, downsampling for the interval axis), then
    cross-validated ``trials`` times with fresh derived seeds; held-out
    errors are pooled per (level, matcher). A level that fails to match
    is recorded in its entry instead of aborting the sweep.
    """
    if axis not in (AXIS_NOISE, AXIS_INTERVAL):
        raise ValueError(f"axis must be {AXIS_NOISE!r} or {AXIS_INTERVAL!r}")
    if not levels:
        raise ValueError("levels must be non-empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if rng is None:
        rng = np.random.default_rng(params.seed)

    entries: list[SweepEntry] = []
    for level in levels:
        level_rng = rng.spawn(1)[0]
        try:
            if axis == AXIS_NOISE:
                degraded = perturb(base_traj, level, level_rng)
            else:
                degraded = downsample(base_traj, level)
        except (ValueError, MatchingError) as exc:
            for matcher in (MATCHER_FILTER, MATCHER_BASELINE):
                entries.append(SweepEntry(level, matcher, None, error=str(exc)))
            continue

        for matcher in (MATCHER_FILTER, MATCHER_BASELINE):
            pooled: list[tuple[int, float]] = []
            recoveries = 0
            failure: str | None = None
            trial_params = params
            for _ in range(trials):
                trial_rng = rng.spawn(1)[0]
                try:
                    if matcher == MATCHER_FILTER:
                        trial_seed = int(trial_rng.integers(np.iinfo(np.int64).max))
                        trial_params = FilterParams(
                            **{**asdict(params), "seed": trial_seed}
                        )
                        rep = crossvalidate(net, degraded, trial_params, fraction, trial_rng)
                        recoveries += rep.recovery_events
                    else:
                        rep = crossvalidate_baseline(net, degraded, fraction, trial_rng)
                except (ValueError, MatchingError) as exc:
                    failure = str(exc)
                    break
                pooled.extend(rep.per_point_errors)
            if failure is not None:
                entries.append(SweepEntry(level, matcher, None, error=failure))
                continue
            p25, p50, p75, mean = _percentiles([e for _, e in pooled])
            entries.append(
                SweepEntry(
                    level,
                    matcher,
                    EvalReport(
                        per_point_errors=tuple(pooled),
                        p25=p25,
                        p50=p50,
                        p75=p75,
                        mean=mean,
                        recovery_events=recoveries,
                        params=params if matcher == MATCHER_FILTER else None,
                    ),
                )
            )
    return SweepReport(axis=axis, levels=tuple(levels), entries=tuple(entries))
