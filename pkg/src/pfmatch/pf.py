"""Particle-filter map matching.

The hidden state is a position on the directed road network; observations
are GPS points. One filter step advances every particle by a noisy travel
distance (branching uniformly at intersections), reweights by a Gaussian
likelihood in planar distance to the observation, and resamples. Candidate
paths fall out of the final particle population: each distinct edge-history
is a candidate whose probability is the fraction of particles carrying it.

``exact_posterior`` computes the same model's path posterior by route
enumeration and numerical quadrature. It is deliberately independent of
the sampling code paths so tests can use it as an oracle.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import ndtr

from .geo import LocalProjection, planar_distance, project
from .roadnet import (
    EdgeId,
    NetworkPosition,
    RoadNetwork,
    advance,
    branch_options,
    edges_within_radius,
    positions_to_planar,
)
from .trajectory import GpsPoint, Trajectory


class MatchingError(RuntimeError):
    """Base class for failures of the matching process itself."""


class UnmatchableStartError(MatchingError):
    """No road near the first observation; matching cannot start."""


class InitializationError(MatchingError):
    """Rejection sampling around an observation failed to place particles."""


class DegeneracyError(MatchingError):
    """Every particle's likelihood underflowed to zero."""


class EnumerationBoundsError(ValueError):
    """Instance too large for exact posterior enumeration."""


@dataclass(frozen=True)
class FilterParams:
    """Tuning knobs for one matching run.

    The transition noise grows with the control: the effective sigma for a
    step with control u is ``max(transition_sigma, transition_sigma_scale * u)``,
    so a 1 s and a 60 s sampling interval both get sensibly scaled spread.
    Set ``transition_sigma_scale`` to 0 for a fixed sigma.
    """

    particle_count: int = 1000
    init_pos_sigma: float = 10.0
    init_bearing_sigma: float = 20.0
    init_radius: float = 50.0
    bearing_gate: float = 90.0
    snap_tolerance: float = 2.0
    transition_sigma: float = 2.0
    transition_sigma_scale: float = 0.2
    measurement_sigma: float = 5.0
    allow_uturn: bool = False
    adaptive_resampling: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.particle_count < 1:
            raise ValueError("particle_count must be >= 1")
        for name in ("init_pos_sigma", "init_bearing_sigma", "transition_sigma", "measurement_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.init_radius <= 0 or self.snap_tolerance <= 0:
            raise ValueError("init_radius and snap_tolerance must be positive")
        if not 0.0 < self.bearing_gate <= 180.0:
            raise ValueError("bearing_gate must be in (0, 180]")
        if self.transition_sigma_scale < 0:
            raise ValueError("transition_sigma_scale must be nonnegative")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass(slots=True)
class Particle:
    """A hypothesized vehicle state plus the edges entered so far."""

    state: NetworkPosition
    history: tuple[EdgeId, ...]
    weight: float


@dataclass(slots=True)
class ParticleSet:
    particles: list[Particle]
    t: int


@dataclass(frozen=True)
class CandidatePath:
    edges: tuple[EdgeId, ...]
    probability: float
    support: int


@dataclass(frozen=True)
class StepStats:
    t: int
    ess: float
    resampled: bool
    reinitialized: bool


@dataclass(frozen=True)
class MatchResult:
    candidates: tuple[CandidatePath, ...]
    steps: tuple[StepStats, ...]
    params: FilterParams
    recovery_events: int = 0

    @property
    def segmented(self) -> bool:
        """True when a mid-run recovery restarted the histories."""
        return self.recovery_events > 0


# Stream domains for deriving independent rngs from one seed.
_DOMAIN_INIT = 0
_DOMAIN_RESAMPLE = 1
_DOMAIN_PROPAGATE = 2


def _stream(seed: int, domain: int, counter: int) -> np.random.Generator:
    return np.random.default_rng((seed, domain, counter))


def effective_sample_size(pset: ParticleSet) -> float:
    w = np.array([p.weight for p in pset.particles])
    return float(1.0 / np.sum(w * w))


def transition_sigma_for(params: FilterParams, u: float) -> float:
    return max(params.transition_sigma, params.transition_sigma_scale * u)


def control_distance(prev: GpsPoint, curr: GpsPoint, proj: LocalProjection) -> float:
    """Planar distance between consecutive observations (the travel control)."""
    return planar_distance(project(proj, prev.position), project(proj, curr.position))


def _candidate_segments(net: RoadNetwork, edge_ids: Iterable[EdgeId]):
    """Per-edge polyline arrays for vectorized snap tests."""
    return [(eid, net.planar[eid]) for eid in edge_ids]


def initialize(
    net: RoadNetwork, first: GpsPoint, params: FilterParams, rng: np.random.Generator
) -> ParticleSet:
    """Draw the starting particle population around the first observation.

    Positions are proposed from a planar Gaussian and bearings from a
    wrapped Gaussian; a proposal is accepted when an edge lies within the
    snap tolerance and that edge's heading agrees with the proposed
    bearing within the gate. The particle is placed at its projection onto
    the nearest such edge.
    """
    m = params.particle_count
    if not edges_within_radius(net, first.position, params.init_radius):
        raise UnmatchableStartError(
            f"no edge within {params.init_radius} m of ({first.position.lat}, {first.position.lon})"
        )
    center = project(net.projection, first.position)
    tol = params.snap_tolerance

    accepted_edges: list[int] = []
    accepted_offsets: list[float] = []
    proposals_used = 0
    proposal_limit = 1000 * m
    batch = min(max(4 * m, 1024), 65536)

    while len(accepted_edges) < m and proposals_used < proposal_limit:
        b = min(batch, proposal_limit - proposals_used)
        dx = rng.normal(0.0, params.init_pos_sigma, b)
        dy = rng.normal(0.0, params.init_pos_sigma, b)
        brg = rng.normal(first.bearing, params.init_bearing_sigma, b) % 360.0
        proposals_used += b

        radius = float(np.max(np.hypot(dx, dy))) + tol
        hits = edges_within_radius(net, first.position, radius)
        if not hits:
            continue
        px = center.x + dx
        py = center.y + dy

        cand = _candidate_segments(net, (h[0] for h in hits))
        n_edges = len(cand)
        dist_mat = np.full((n_edges, b), np.inf)
        off_mat = np.zeros((n_edges, b))
        head_mat = np.zeros((n_edges, b))
        for k, (eid, pl) in enumerate(cand):
            xs, ys, cum, headings = pl.xs, pl.ys, pl.cum, pl.headings
            ax, ay = xs[:-1], ys[:-1]
            vx, vy = np.diff(xs), np.diff(ys)
            seg_sq = vx * vx + vy * vy
            t = ((px[:, None] - ax) * vx + (py[:, None] - ay) * vy) / np.where(seg_sq > 0, seg_sq, 1.0)
            t = np.clip(t, 0.0, 1.0)
            cx = ax + t * vx
            cy = ay + t * vy
            d = np.hypot(px[:, None] - cx, py[:, None] - cy)
            seg_best = np.argmin(d, axis=1)
            rows = np.arange(b)
            dist_mat[k] = d[rows, seg_best]
            off_mat[k] = cum[seg_best] + t[rows, seg_best] * (cum[seg_best + 1] - cum[seg_best])
            head_mat[k] = headings[seg_best]

        delta = np.abs(head_mat - brg[None, :]) % 360.0
        delta = np.minimum(delta, 360.0 - delta)
        ok = (dist_mat <= tol) & (delta <= params.bearing_gate)
        masked = np.where(ok, dist_mat, np.inf)
        winner = np.argmin(masked, axis=0)
        good = np.isfinite(masked[winner, np.arange(b)])

        edge_ids = np.array([c[0] for c in cand])
        for w, idx in zip(winner[good], np.flatnonzero(good)):
            accepted_edges.append(int(edge_ids[w]))
            accepted_offsets.append(float(off_mat[w, idx]))
            if len(accepted_edges) >= m:
                break

    if len(accepted_edges) < m:
        raise InitializationError(
            f"accepted {len(accepted_edges)}/{m} particles after {proposals_used} proposals "
            f"(snap_tolerance={tol} m, bearing_gate={params.bearing_gate} deg, "
            f"init_pos_sigma={params.init_pos_sigma} m, init_bearing_sigma={params.init_bearing_sigma} deg)"
        )

    w0 = 1.0 / m
    particles = [
        Particle(NetworkPosition(e, o), (e,), w0)
        for e, o in zip(accepted_edges[:m], accepted_offsets[:m])
    ]
    return ParticleSet(particles, t=0)


def propagate(
    net: RoadNetwork,
    pset: ParticleSet,
    u: float,
    params: FilterParams,
    rng: np.random.Generator,
) -> ParticleSet:
    """Advance every particle by a noisy travel distance.

    Distances are drawn index-aligned in one vectorized call and negative
    draws clamp to zero (a particle never reverses mid-edge). Branch draws
    at intersections come from per-particle generators derived from an
    index-aligned key vector, so evaluation order cannot change results.
    """
    if u < 0:
        raise ValueError("control distance must be nonnegative")
    sigma = transition_sigma_for(params, u)
    m = len(pset.particles)
    dist = np.maximum(rng.normal(u, sigma, m), 0.0)
    branch_keys = rng.integers(np.iinfo(np.int64).max, size=m)

    out: list[Particle] = []
    edges = net.edges
    for i, p in enumerate(pset.particles):
        d = dist[i]
        length = edges[p.state.edge].length
        if p.state.offset + d <= length:
            out.append(Particle(NetworkPosition(p.state.edge, p.state.offset + d), p.history, p.weight))
            continue
        step = advance(
            net, p.state, d, np.random.default_rng(int(branch_keys[i])), allow_uturn=params.allow_uturn
        )
        history = p.history
        if step.traversed:
            history = history + step.traversed[1:] + (step.end.edge,)
        out.append(Particle(step.end, history, p.weight))
    return ParticleSet(out, t=pset.t + 1)


def weigh(
    pset: ParticleSet, obs: GpsPoint, params: FilterParams, net: RoadNetwork
) -> ParticleSet:
    """Multiply weights by the Gaussian observation likelihood and normalize.

    Likelihoods are evaluated in raw (non-log) space on purpose: if every
    particle is so far from the observation that its likelihood underflows
    to zero, that is a real degeneracy and is signalled rather than papered
    over with rescaling.
    """
    edge_ids = np.fromiter((p.state.edge for p in pset.particles), dtype=np.int64, count=len(pset.particles))
    offsets = np.fromiter((p.state.offset for p in pset.particles), dtype=np.float64, count=len(pset.particles))
    xs, ys = positions_to_planar(net, edge_ids, offsets)
    o = project(net.projection, obs.position)
    d_sq = (xs - o.x) ** 2 + (ys - o.y) ** 2
    lik = np.exp(-d_sq / (2.0 * params.measurement_sigma**2))
    w = np.fromiter((p.weight for p in pset.particles), dtype=np.float64, count=len(pset.particles)) * lik
    total = float(w.sum())
    if total <= 0.0:
        raise DegeneracyError(f"all particle likelihoods underflowed at step {pset.t}")
    w /= total
    particles = [Particle(p.state, p.history, float(wi)) for p, wi in zip(pset.particles, w)]
    return ParticleSet(particles, t=pset.t)


def resample(
    pset: ParticleSet, params: FilterParams, rng: np.random.Generator
) -> ParticleSet:
    """Multinomial resampling: M independent weight-proportional draws."""
    m = params.particle_count
    w = np.fromiter((p.weight for p in pset.particles), dtype=np.float64, count=len(pset.particles))
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("cannot resample from all-zero weights")
    idx = rng.choice(len(pset.particles), size=m, replace=True, p=w / total)
    w_new = 1.0 / m
    particles = [
        Particle(pset.particles[i].state, pset.particles[i].history, w_new) for i in idx
    ]
    return ParticleSet(particles, t=pset.t)


def extract_paths(pset: ParticleSet, m: int) -> tuple[CandidatePath, ...]:
    """Group particles by exact edge-history into ranked candidate paths."""
    counts: dict[tuple[EdgeId, ...], int] = defaultdict(int)
    for p in pset.particles:
        counts[p.history] += 1
    candidates = [
        CandidatePath(edges=h, probability=c / m, support=c) for h, c in counts.items()
    ]
    candidates.sort(key=lambda c: (-c.support, c.edges))
    return tuple(candidates)


def run_filter(net: RoadNetwork, traj: Trajectory, params: FilterParams) -> MatchResult:
    """Match a whole trajectory and return ranked candidate paths.

    Fully deterministic given ``params.seed``. If the weight step signals
    degeneracy, the filter reinitializes around the current observation;
    the event is recorded and the returned candidates then describe only
    the post-recovery suffix of the trajectory.
    """
    m = params.particle_count
    recoveries = 0
    pset = initialize(net, traj.points[0], params, _stream(params.seed, _DOMAIN_INIT, 0))
    steps: list[StepStats] = []
    for t in range(1, len(traj.points)):
        u = control_distance(traj.points[t - 1], traj.points[t], net.projection)
        pset = propagate(net, pset, u, params, _stream(params.seed, _DOMAIN_PROPAGATE, t))
        try:
            pset = weigh(pset, traj.points[t], params, net)
        except DegeneracyError:
            recoveries += 1
            pset = initialize(net, traj.points[t], params, _stream(params.seed, _DOMAIN_INIT, recoveries))
            pset = ParticleSet(pset.particles, t=t)
            steps.append(StepStats(t=t, ess=float(m), resampled=False, reinitialized=True))
            continue
        ess = effective_sample_size(pset)
        if params.adaptive_resampling and ess >= m / 2.0:
            resampled = False
        else:
            pset = resample(pset, params, _stream(params.seed, _DOMAIN_RESAMPLE, t))
            resampled = True
        steps.append(StepStats(t=t, ess=ess, resampled=resampled, reinitialized=False))
    return MatchResult(
        candidates=extract_paths(pset, m),
        steps=tuple(steps),
        params=params,
        recovery_events=recoveries,
    )


# ---------------------------------------------------------------------------
# Exact posterior oracle (quadrature + route enumeration, test support)
# ---------------------------------------------------------------------------


@dataclass
class _EdgeBins:
    """Offset discretization of one edge for the quadrature oracle."""

    lo: np.ndarray
    hi: np.ndarray
    centers: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    length: float

    @property
    def n(self) -> int:
        return len(self.centers)


def _make_bins(net: RoadNetwork, eid: EdgeId, bin_size: float) -> _EdgeBins:
    pl = net.planar[eid]
    n = max(1, int(math.ceil(pl.length / bin_size)))
    bounds = np.linspace(0.0, pl.length, n + 1)
    centers = 0.5 * (bounds[:-1] + bounds[1:])
    seg = np.clip(np.searchsorted(pl.cum, centers, side="right") - 1, 0, len(pl.cum) - 2)
    seg_len = pl.cum[seg + 1] - pl.cum[seg]
    t = np.where(seg_len > 0, (centers - pl.cum[seg]) / np.where(seg_len > 0, seg_len, 1.0), 0.0)
    return _EdgeBins(
        lo=bounds[:-1],
        hi=bounds[1:],
        centers=centers,
        cx=pl.xs[seg] + t * (pl.xs[seg + 1] - pl.xs[seg]),
        cy=pl.ys[seg] + t * (pl.ys[seg + 1] - pl.ys[seg]),
        length=pl.length,
    )


def _gate_probability(heading: float, mu: float, sigma: float, gate: float) -> float:
    """P(|wrapped(B - heading)| <= gate) for B ~ Normal(mu, sigma)."""
    if gate >= 180.0:
        return 1.0
    p = 0.0
    for k in range(-3, 4):
        lo = (heading - gate - mu + 360.0 * k) / sigma
        hi = (heading + gate - mu + 360.0 * k) / sigma
        p += float(ndtr(hi) - ndtr(lo))
    return min(p, 1.0)


def _init_mass(
    net: RoadNetwork,
    first: GpsPoint,
    params: FilterParams,
    bins: dict[EdgeId, _EdgeBins],
    grid_step: float,
    tail_sigmas: float,
) -> dict[tuple[EdgeId, ...], np.ndarray]:
    """Quadrature over the proposal plane of the initialization rule."""
    center = project(net.projection, first.position)
    r = tail_sigmas * params.init_pos_sigma + params.snap_tolerance
    ax = np.arange(center.x - r, center.x + r, grid_step) + grid_step / 2.0
    ay = np.arange(center.y - r, center.y + r, grid_step) + grid_step / 2.0
    gx, gy = np.meshgrid(ax, ay)
    px = gx.ravel()
    py = gy.ravel()
    cell_w = np.exp(-((px - center.x) ** 2 + (py - center.y) ** 2) / (2.0 * params.init_pos_sigma**2))

    edge_ids = sorted(net.edges)
    n_edges = len(edge_ids)
    n_cells = len(px)
    dist = np.full((n_edges, n_cells), np.inf)
    off = np.zeros((n_edges, n_cells))
    gate_p = np.zeros((n_edges, n_cells))
    for k, eid in enumerate(edge_ids):
        pl = net.planar[eid]
        ax_, ay_ = pl.xs[:-1], pl.ys[:-1]
        vx, vy = np.diff(pl.xs), np.diff(pl.ys)
        seg_sq = vx * vx + vy * vy
        t = ((px[:, None] - ax_) * vx + (py[:, None] - ay_) * vy) / np.where(seg_sq > 0, seg_sq, 1.0)
        t = np.clip(t, 0.0, 1.0)
        d = np.hypot(px[:, None] - (ax_ + t * vx), py[:, None] - (ay_ + t * vy))
        best = np.argmin(d, axis=1)
        rows = np.arange(n_cells)
        dist[k] = d[rows, best]
        off[k] = pl.cum[best] + t[rows, best] * (pl.cum[best + 1] - pl.cum[best])
        seg_gate = np.array(
            [
                _gate_probability(h, first.bearing, params.init_bearing_sigma, params.bearing_gate)
                for h in pl.headings
            ]
        )
        gate_p[k] = seg_gate[best]

    admissible = dist <= params.snap_tolerance
    g_eff = np.where(admissible, gate_p, 0.0)
    order = np.argsort(dist, axis=0)
    g_sorted = np.take_along_axis(g_eff, order, axis=0)
    # Probability each cell's proposal lands on the j-th nearest edge:
    # nearer admissible edges must all fail their bearing gate first.
    survive = np.cumprod(1.0 - g_sorted, axis=0)
    assign = np.empty_like(g_sorted)
    assign[0] = g_sorted[0]
    assign[1:] = survive[:-1] * g_sorted[1:]

    mass: dict[tuple[EdgeId, ...], np.ndarray] = {}
    for k, eid in enumerate(edge_ids):
        total = np.zeros(bins[eid].n)
        for rank in range(n_edges):
            sel = order[rank] == k
            if not np.any(sel):
                continue
            contrib = cell_w[sel] * assign[rank, sel]
            if not np.any(contrib > 0):
                continue
            b_idx = np.clip(
                (off[k, sel] / bins[eid].length * bins[eid].n).astype(int), 0, bins[eid].n - 1
            )
            np.add.at(total, b_idx, contrib)
        if total.sum() > 0:
            mass[(eid,)] = total
    if not mass:
        raise UnmatchableStartError("initialization quadrature found no admissible road mass")
    return mass


def exact_posterior(
    net: RoadNetwork,
    traj: Trajectory,
    params: FilterParams,
    *,
    max_observations: int = 5,
    max_histories: int = 200,
    bin_size: float = 0.25,
    init_grid_step: float = 0.25,
    tail_sigmas: float = 8.0,
) -> dict[tuple[EdgeId, ...], float]:
    """Exact (quadrature-converged) path posterior on a tiny instance.

    Integrates the identical generative model as the filter: the plane
    quadrature of the initialization rule, the clamped-Gaussian travel
    distance with uniform branching, and the Gaussian measurement factor.
    Intended for fixtures of at most a handful of edges and observations;
    raises ``EnumerationBoundsError`` beyond its limits.
    """
    if len(net.edges) > 8:
        raise EnumerationBoundsError(f"{len(net.edges)} edges exceeds the 8-edge oracle limit")
    if len(traj.points) > max_observations:
        raise EnumerationBoundsError(
            f"{len(traj.points)} observations exceed the limit of {max_observations}"
        )

    bins = {eid: _make_bins(net, eid, bin_size) for eid in net.edges}
    histories = _init_mass(net, traj.points[0], params, bins, init_grid_step, tail_sigmas)

    for t in range(1, len(traj.points)):
        u = control_distance(traj.points[t - 1], traj.points[t], net.projection)
        sigma = transition_sigma_for(params, u)
        cap = u + tail_sigmas * sigma
        moved: dict[tuple[EdgeId, ...], np.ndarray] = {}

        def deposit(hist: tuple[EdgeId, ...], contribution: np.ndarray) -> None:
            cur = moved.get(hist)
            moved[hist] = contribution if cur is None else cur + contribution

        for hist, m in histories.items():
            if m.sum() <= 0:
                continue
            eid = hist[-1]
            src = bins[eid]
            s = src.centers
            # Motion within the current edge (continuous part) plus the
            # point mass of negative draws clamped at zero displacement.
            a = np.maximum(src.lo[None, :] - s[:, None], 0.0)
            b = np.maximum(src.hi[None, :] - s[:, None], 0.0)
            stay = m @ (ndtr((b - u) / sigma) - ndtr((a - u) / sigma))
            stay += m * float(ndtr(-u / sigma))
            deposit(hist, stay)

            # Route enumeration beyond the current edge.
            stack: list[tuple[tuple[EdgeId, ...], float, float]] = []
            options = branch_options(net, eid, params.allow_uturn)
            if not options:
                absorb = m @ (1.0 - ndtr((src.length - s - u) / sigma))
                tail = np.zeros(src.n)
                tail[-1] = float(absorb)
                deposit(hist, tail)
            else:
                for o in options:
                    stack.append(((o,), 0.0, 1.0 / len(options)))
            expansions = 0
            while stack:
                route, t_entry, prob = stack.pop()
                expansions += 1
                if expansions > 10_000:
                    raise EnumerationBoundsError("route enumeration exceeded 10000 expansions")
                fid = route[-1]
                dst = bins[fid]
                base = (src.length - s)[:, None] + t_entry
                a = base + dst.lo[None, :]
                b = base + dst.hi[None, :]
                deposit(hist + route, (m * prob) @ (ndtr((b - u) / sigma) - ndtr((a - u) / sigma)))
                nxt = branch_options(net, fid, params.allow_uturn)
                if not nxt:
                    absorb = (m * prob) @ (1.0 - ndtr((base[:, 0] + dst.length - u) / sigma))
                    tail = np.zeros(dst.n)
                    tail[-1] = float(absorb)
                    deposit(hist + route, tail)
                elif t_entry + dst.length <= cap:
                    for o in nxt:
                        stack.append((route + (o,), t_entry + dst.length, prob / len(nxt)))
                if len(moved) > max_histories:
                    raise EnumerationBoundsError(f"history count exceeded {max_histories}")

        # Measurement update.
        o = project(net.projection, traj.points[t].position)
        histories = {}
        for hist, m in moved.items():
            dst = bins[hist[-1]]
            lik = np.exp(-((dst.cx - o.x) ** 2 + (dst.cy - o.y) ** 2) / (2.0 * params.measurement_sigma**2))
            weighted = m * lik
            if weighted.sum() > 0:
                histories[hist] = weighted

    total = sum(float(m.sum()) for m in histories.values())
    if total <= 0:
        raise DegeneracyError("exact posterior mass vanished")
    return {hist: float(m.sum()) / total for hist, m in histories.items()}
