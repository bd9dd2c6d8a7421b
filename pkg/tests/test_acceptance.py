"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest tests/test_acceptance.py -v -s``).

Runtime-bounded criteria assert their own elapsed time. Everything is
seeded, so a green run is bit-reproducible.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pfmatch.evaluation import (
    AXIS_INTERVAL,
    AXIS_NOISE,
    MATCHER_BASELINE,
    MATCHER_FILTER,
    crossvalidate,
    distance_to_path,
    sweep,
)
from pfmatch.fixtures import Y_LEFT, Y_RIGHT, Y_STEM, grid_network, y_junction_network
from pfmatch.geo import GeoPoint, project
from pfmatch.pf import (
    FilterParams,
    Particle,
    ParticleSet,
    control_distance,
    exact_posterior,
    extract_paths,
    initialize,
    propagate,
    resample,
    run_filter,
    weigh,
)
from pfmatch.roadnet import NetworkPosition, edges_within_radius, path_geometry
from pfmatch.simulate import SimConfig, path_overlap, simulate
from pfmatch.trajectory import split_holdout

from conftest import meters_to_geo, obs_trajectory, random_planar_network


@contextmanager
def criterion(number: int, label: str):
    try:
        yield
    except Exception:
        print(f"\n[ACCEPTANCE {number}] {label}: FAIL")
        raise
    print(f"\n[ACCEPTANCE {number}] {label}: PASS")


@pytest.fixture(scope="module")
def y_net():
    return y_junction_network()


@pytest.fixture(scope="module")
def grid100():
    return grid_network(20, 20, 100.0)


@pytest.fixture(scope="module")
def grid200():
    return grid_network(20, 20, 200.0)


def test_criterion_1_oracle_equivalence(y_net):
    with criterion(1, "oracle equivalence on the Y fixture"):
        start = time.perf_counter()
        traj = obs_trajectory(y_net, [(0, -50, 0, 0), (0, 40, 0, 10), (-5, 80, 0, 20)])
        params = FilterParams(particle_count=100_000, measurement_sigma=10.0, seed=2024)
        result = run_filter(y_net, traj, params)
        posterior = exact_posterior(y_net, traj, params)

        probs = {c.edges: c.probability for c in result.candidates}
        keys = set(probs) | set(posterior)
        l1 = sum(abs(probs.get(k, 0.0) - posterior.get(k, 0.0)) for k in keys)
        assert l1 <= 0.05, f"L1 distance to exact posterior {l1:.4f} > 0.05"

        # hand-computed asymmetric split: odds e, i.e. 0.7311 / 0.2689
        assert probs[(Y_STEM, Y_LEFT)] == pytest.approx(0.7310585786300049, abs=0.02)
        assert probs[(Y_STEM, Y_RIGHT)] == pytest.approx(0.2689414213699951, abs=0.02)
        assert posterior[(Y_STEM, Y_LEFT)] == pytest.approx(0.7310585786300049, abs=1e-3)

        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"criterion 1 took {elapsed:.1f}s (limit 30s)"


def test_criterion_2_invariant_suite(grid100):
    with criterion(2, "filter invariants and reproducibility"):
        start = time.perf_counter()
        cfg = SimConfig(speed=10.0, duration=120.0, sample_interval=1.0, noise_sigma=5.0, seed=3)
        traj, _ = simulate(grid100, cfg, np.random.default_rng(3))
        params = FilterParams(particle_count=500, seed=77)

        pset = initialize(grid100, traj.points[0], params, np.random.default_rng((77, 0, 0)))
        for t in range(1, len(traj.points)):
            u = control_distance(traj.points[t - 1], traj.points[t], grid100.projection)
            pset = propagate(grid100, pset, u, params, np.random.default_rng((77, 2, t)))
            pset = weigh(pset, traj.points[t], params, grid100)
            assert abs(sum(p.weight for p in pset.particles) - 1.0) < 1e-9
            pset = resample(pset, params, np.random.default_rng((77, 1, t)))
            assert len(pset.particles) == params.particle_count
            assert all(p.weight == 1.0 / params.particle_count for p in pset.particles)
            for p in pset.particles:
                assert p.history[-1] == p.state.edge
                for a, b in zip(p.history[:-1], p.history[1:]):
                    assert grid100.edges[b].from_node == grid100.edges[a].to_node

        candidates = extract_paths(pset, params.particle_count)
        assert abs(sum(c.probability for c in candidates) - 1.0) < 1e-9

        assert run_filter(grid100, traj, params) == run_filter(grid100, traj, params)

        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"criterion 2 took {elapsed:.1f}s (limit 60s)"


def test_criterion_3_resampling_statistics():
    with criterion(3, "multinomial resampling statistics"):
        weights = np.arange(1, 11, dtype=float)
        weights /= weights.sum()
        particles = [
            Particle(NetworkPosition(1, float(i)), (1,), w) for i, w in enumerate(weights)
        ]
        pset = ParticleSet(particles, t=0)
        params = FilterParams(particle_count=10)
        rng = np.random.default_rng(314159)

        trials = 10_000
        counts = np.zeros(10)
        for _ in range(trials):
            out = resample(pset, params, rng)
            for p in out.particles:
                counts[int(p.state.offset)] += 1

        n = trials * 10
        expected = n * weights
        sigma = np.sqrt(n * weights * (1.0 - weights))
        deviations = np.abs(counts - expected) / sigma
        assert np.all(deviations <= 3.0), f"copy counts off by up to {deviations.max():.2f} sigma"


def test_criterion_4_synthetic_fidelity(grid100):
    with criterion(4, "synthetic ground-truth fidelity"):
        start = time.perf_counter()
        successes = 0
        details = []
        for s in range(10):
            cfg = SimConfig(
                speed=10.0, duration=199.0, sample_interval=1.0, noise_sigma=5.0, seed=s
            )
            traj, truth = simulate(grid100, cfg, np.random.default_rng((100, s)))
            params = FilterParams(particle_count=1000, seed=s)
            report = crossvalidate(grid100, traj, params, 0.1, np.random.default_rng((200, s)))
            # same split as inside crossvalidate, same params: identical match
            split = split_holdout(traj, 0.1, np.random.default_rng((200, s)))
            result = run_filter(grid100, split.train, params)
            overlap = path_overlap(result.candidates[0].edges, truth.path, grid100)
            ok = report.p50 <= 10.0 and overlap >= 0.9
            successes += ok
            details.append(f"seed {s}: p50={report.p50:.2f} overlap={overlap:.3f} {'ok' if ok else 'MISS'}")
        print("\n" + "\n".join(details))
        assert successes >= 8, f"only {successes}/10 trials met p50<=10m and overlap>=0.9"

        elapsed = time.perf_counter() - start
        assert elapsed < 300.0, f"criterion 4 took {elapsed:.1f}s (limit 300s)"


def test_criterion_5_noise_robustness(grid100):
    with criterion(5, "noise-robustness trend"):
        cfg = SimConfig(speed=10.0, duration=240.0, sample_interval=1.0, noise_sigma=5.0, seed=33)
        base, _ = simulate(grid100, cfg, np.random.default_rng(33))
        # one fixed parameter set across all levels, sized for the
        # noisiest one: robustness is judged without per-level retuning
        params = FilterParams(particle_count=1000, measurement_sigma=20.0, seed=5)
        report = sweep(
            grid100, base, params, AXIS_NOISE, [5.0, 10.0, 20.0], trials=10,
            rng=np.random.default_rng(55),
        )
        p50 = {lv: report.report_for(lv, MATCHER_FILTER).p50 for lv in (5.0, 10.0, 20.0)}
        print(f"\nnoise p50s: {p50}")
        assert p50[20.0] <= 4.0 * p50[5.0], (
            f"p50 at 20 m noise ({p50[20.0]:.2f}) exceeds 4x p50 at 5 m ({p50[5.0]:.2f})"
        )
        assert p50[5.0] <= p50[10.0] <= p50[20.0], f"p50 not non-decreasing: {p50}"


def test_criterion_6_sampling_rate_degradation(grid200):
    with criterion(6, "sampling-rate degradation trend"):
        cfg = SimConfig(speed=15.0, duration=3000.0, sample_interval=1.0, noise_sigma=2.0, seed=17)
        base, _ = simulate(grid200, cfg, np.random.default_rng(17))
        params = FilterParams(particle_count=1000, measurement_sigma=8.0, seed=5)
        levels = [1.0, 10.0, 30.0, 60.0]
        report = sweep(
            grid200, base, params, AXIS_INTERVAL, levels, trials=10,
            rng=np.random.default_rng(77),
        )
        f50 = [report.report_for(lv, MATCHER_FILTER).p50 for lv in levels]
        b50 = [report.report_for(lv, MATCHER_BASELINE).p50 for lv in levels]
        print(f"\nfilter p50s:   {[round(v, 2) for v in f50]}")
        print(f"baseline p50s: {[round(v, 2) for v in b50]}")
        assert all(a <= b for a, b in zip(f50, f50[1:])), f"filter p50 not non-decreasing: {f50}"
        filter_delta = f50[-1] - f50[0]
        baseline_delta = b50[-1] - b50[0]
        assert baseline_delta < filter_delta, (
            f"baseline degraded by {baseline_delta:.2f} m, filter by {filter_delta:.2f} m; "
            "expected the filter to degrade more"
        )


def brute_force_radius(net, p, r):
    q = project(net.projection, p)
    hits = []
    for eid in net.edges:
        pl = net.planar[eid]
        best = math.inf
        for i in range(len(pl.xs) - 1):
            ax, ay, bx, by = pl.xs[i], pl.ys[i], pl.xs[i + 1], pl.ys[i + 1]
            vx, vy = bx - ax, by - ay
            seg_sq = vx * vx + vy * vy
            t = 0.0 if seg_sq == 0 else max(0.0, min(1.0, ((q.x - ax) * vx + (q.y - ay) * vy) / seg_sq))
            d = math.hypot(q.x - (ax + t * vx), q.y - (ay + t * vy))
            best = min(best, d)
        if best <= r:
            hits.append((eid, best))
    hits.sort(key=lambda h: (h[1], h[0]))
    return hits


def test_criterion_7_geometry_oracles(y_net):
    with criterion(7, "geometry oracles"):
        # radius queries vs brute-force scan, 1000 random queries
        rng = np.random.default_rng(2718)
        checked = 0
        for net_seed in range(5):
            net = random_planar_network(np.random.default_rng(net_seed), n_nodes=22, extra_edges=25)
            for _ in range(200):
                p = meters_to_geo(float(rng.uniform(-650, 650)), float(rng.uniform(-650, 650)))
                r = float(rng.uniform(5.0, 200.0))
                got = edges_within_radius(net, p, r)
                want = brute_force_radius(net, p, r)
                assert [h[0] for h in got] == [h[0] for h in want]
                for g, w in zip(got, want):
                    assert abs(g[2] - w[1]) < 1e-9
                checked += 1
        assert checked == 1000

        # distance-to-path vs 1 cm dense-sampling oracle, 100 pairs
        rng = np.random.default_rng(1414)
        proj = y_net.projection
        for _ in range(100):
            n_vert = int(rng.integers(2, 6))
            xs = np.cumsum(rng.uniform(-80, 80, n_vert))
            ys = np.cumsum(rng.uniform(-80, 80, n_vert))
            from pfmatch.geo import PlanarPoint, unproject
            from pfmatch.trajectory import GpsPoint

            poly = [unproject(proj, PlanarPoint(float(x), float(y))) for x, y in zip(xs, ys)]
            q = GpsPoint(
                position=unproject(
                    proj,
                    PlanarPoint(float(xs[0] + rng.uniform(-60, 60)), float(ys[0] + rng.uniform(-60, 60))),
                ),
                bearing=0.0,
                timestamp=0.0,
            )
            got = distance_to_path(q, poly, proj)
            qp = project(proj, q.position)
            dense = math.inf
            for a, b in zip(poly[:-1], poly[1:]):
                pa, pb = project(proj, a), project(proj, b)
                seg_len = math.hypot(pb.x - pa.x, pb.y - pa.y)
                ts = np.linspace(0.0, 1.0, max(2, int(seg_len / 0.01) + 1))
                d = np.hypot(qp.x - (pa.x + ts * (pb.x - pa.x)), qp.y - (pa.y + ts * (pb.y - pa.y)))
                dense = min(dense, float(d.min()))
            assert abs(got - dense) <= 0.02, f"{got} vs dense {dense}"
