"""Command-line interface.

Five file-based subcommands: ``match``, ``eval``, ``sweep``, ``simulate``
and ``perturb``. Everything is seedable and outputs are written atomically
(temp file + rename), so identical invocations produce identical files.

Exit codes: 0 success, 1 input/validation error, 2 matching failure,
3 partial result (e.g. a simulated walk truncated at a dead end).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import evaluation
from .evaluation import (
    AXIS_INTERVAL,
    AXIS_NOISE,
    crossvalidate,
    sweep,
)
from .pf import FilterParams, MatchingError, MatchResult, run_filter
from .roadnet import NetworkBuildError, RoadNetwork, load_network_geojson, path_geometry
from .simulate import GroundTruth, SimConfig, simulate
from .trajectory import (
    Trajectory,
    TrajectoryParseError,
    downsample,
    format_trajectory,
    parse_trajectory,
    perturb,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MATCHING = 2
EXIT_PARTIAL = 3


def _write_atomic(path: str | Path, content: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_network(path: str) -> RoadNetwork:
    if not os.path.exists(path):
        raise FileNotFoundError(f"network file not found: {path}")
    return load_network_geojson(path)


def _load_trajectory(path: str) -> Trajectory:
    if not os.path.exists(path):
        raise FileNotFoundError(f"trajectory file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_trajectory(f.read())


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    d = FilterParams()
    p.add_argument("--particle-count", type=int, default=d.particle_count)
    p.add_argument("--init-pos-sigma", type=float, default=d.init_pos_sigma)
    p.add_argument("--init-bearing-sigma", type=float, default=d.init_bearing_sigma)
    p.add_argument("--init-radius", type=float, default=d.init_radius)
    p.add_argument("--bearing-gate", type=float, default=d.bearing_gate)
    p.add_argument("--snap-tolerance", type=float, default=d.snap_tolerance)
    p.add_argument("--transition-sigma", type=float, default=d.transition_sigma)
    p.add_argument("--transition-sigma-scale", type=float, default=d.transition_sigma_scale)
    p.add_argument("--measurement-sigma", type=float, default=d.measurement_sigma)
    p.add_argument("--allow-uturn", action="store_true")
    p.add_argument("--adaptive-resampling", action="store_true")
    p.add_argument("--seed", type=int, default=d.seed)


def _params_from_args(args: argparse.Namespace) -> FilterParams:
    kwargs = {f.name: getattr(args, f.name) for f in fields(FilterParams)}
    return FilterParams(**kwargs)


def _match_geojson(net: RoadNetwork, result: MatchResult) -> dict:
    features = []
    for rank, cand in enumerate(result.candidates, start=1):
        geom = path_geometry(net, cand.edges)
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[g.lon, g.lat] for g in geom],
                },
                "properties": {
                    "probability": cand.probability,
                    "rank": rank,
                    "support": cand.support,
                    "edge_ids": list(cand.edges),
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def _match_report(result: MatchResult) -> dict:
    return {
        "candidates": [
            {
                "edges": list(c.edges),
                "probability": c.probability,
                "support": c.support,
            }
            for c in result.candidates
        ],
        "steps": [
            {
                "t": s.t,
                "ess": s.ess,
                "resampled": s.resampled,
                "reinitialized": s.reinitialized,
            }
            for s in result.steps
        ],
        "recovery_events": result.recovery_events,
        "segmented": result.segmented,
        "params": asdict(result.params),
    }


def _ground_truth_json(truth: GroundTruth) -> dict:
    return {
        "path": list(truth.path),
        "positions": [{"edge": p.edge, "offset": p.offset} for p in truth.positions],
        "truncated": truth.truncated,
    }


def cmd_match(args: argparse.Namespace) -> int:
    net = _load_network(args.network)
    traj = _load_trajectory(args.trajectory)
    params = _params_from_args(args)
    result = run_filter(net, traj, params)
    _write_atomic(args.output, json.dumps(_match_geojson(net, result), indent=2) + "\n")
    _write_atomic(args.report, json.dumps(_match_report(result), indent=2) + "\n")
    top = result.candidates[0]
    print(
        f"matched: {len(result.candidates)} candidate path(s); "
        f"top probability {top.probability:.4f} over {len(top.edges)} edge(s)"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    net = _load_network(args.network)
    traj = _load_trajectory(args.trajectory)
    params = _params_from_args(args)
    if not 0.0 < args.holdout_fraction < 0.5:
        raise ValueError(f"--holdout-fraction {args.holdout_fraction} outside (0, 0.5)")
    rng = np.random.default_rng((params.seed, 3))
    report = crossvalidate(net, traj, params, args.holdout_fraction, rng, weighted=args.weighted)
    _write_atomic(args.output, json.dumps(report.to_json_dict(), indent=2) + "\n")
    print(f"p25={report.p25:.3f} p50={report.p50:.3f} p75={report.p75:.3f} mean={report.mean:.3f} (meters)")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    net = _load_network(args.network)
    traj = _load_trajectory(args.trajectory)
    params = _params_from_args(args)
    axis = AXIS_NOISE if args.axis == "noise" else AXIS_INTERVAL
    levels = [float(v) for v in args.levels.split(",") if v.strip()]
    if not levels:
        raise ValueError("--levels must name at least one level")
    rng = np.random.default_rng((params.seed, 4))
    report = sweep(net, traj, params, axis, levels, trials=args.trials, rng=rng,
                   fraction=args.holdout_fraction)
    _write_atomic(args.output, json.dumps(report.to_json_dict(), indent=2) + "\n")
    if args.errors_csv:
        _write_atomic(args.errors_csv, report.errors_csv())
    for e in report.entries:
        status = f"p50={e.report.p50:.3f}" if e.report else f"failed: {e.error}"
        print(f"level={e.level} matcher={e.matcher} {status}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    net = _load_network(args.network)
    cfg = SimConfig(
        speed=args.speed,
        duration=args.duration,
        sample_interval=args.sample_interval,
        noise_sigma=args.noise_sigma,
        bearing_noise_sigma=args.bearing_noise_sigma,
        seed=args.seed,
    )
    rng = np.random.default_rng(cfg.seed)
    traj, truth = simulate(net, cfg, rng)
    _write_atomic(args.output_trajectory, format_trajectory(traj))
    _write_atomic(args.output_truth, json.dumps(_ground_truth_json(truth), indent=2) + "\n")
    print(f"simulated {len(traj.points)} points over {len(truth.path)} edge(s)")
    if truth.truncated:
        print("warning: walk truncated at a dead end", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_perturb(args: argparse.Namespace) -> int:
    traj = _load_trajectory(args.trajectory)
    if args.interval is None and args.noise_sigma is None:
        raise ValueError("nothing to do: pass --interval and/or --noise-sigma")
    # Documented order: downsample first, then add noise.
    if args.interval is not None:
        traj = downsample(traj, args.interval)
    if args.noise_sigma is not None:
        traj = perturb(traj, args.noise_sigma, np.random.default_rng(args.seed))
    _write_atomic(args.output, format_trajectory(traj))
    print(f"wrote {len(traj.points)} points")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfmatch",
        description="Probabilistic map-matching of GPS trajectories onto a road network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "match",
        help="match a trajectory, write candidate paths as GeoJSON + JSON report",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--network", required=True, help="road network GeoJSON")
    p.add_argument("--trajectory", required=True, help="trajectory CSV")
    p.add_argument("--output", required=True, help="candidate paths GeoJSON")
    p.add_argument("--report", required=True, help="match report JSON")
    _add_filter_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser(
        "eval",
        help="holdout cross-validation of matching accuracy",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--network", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--output", required=True, help="evaluation report JSON")
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--weighted", action="store_true",
                   help="score the probability-weighted candidate mixture instead of the top path")
    _add_filter_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "sweep",
        help="noise / sampling-interval sensitivity sweep",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--network", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--output", required=True, help="sweep report JSON")
    p.add_argument("--errors-csv", default=None, help="pooled per-point errors CSV")
    p.add_argument("--axis", choices=["noise", "interval"], required=True)
    p.add_argument("--levels", required=True, help="comma-separated levels, e.g. 5,10,20")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(
        "simulate",
        help="simulate a drive on the network and emit noisy GPS",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--network", required=True)
    p.add_argument("--output-trajectory", required=True, help="trajectory CSV")
    p.add_argument("--output-truth", required=True, help="ground truth JSON")
    p.add_argument("--speed", type=float, default=10.0, help="meters/second")
    p.add_argument("--duration", type=float, default=200.0, help="seconds")
    p.add_argument("--sample-interval", type=float, default=1.0, help="seconds")
    p.add_argument("--noise-sigma", type=float, default=5.0, help="meters per axis")
    p.add_argument("--bearing-noise-sigma", type=float, default=5.0, help="degrees")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "perturb",
        help="degrade a trajectory: downsample and/or add position noise",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--trajectory", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--interval", type=float, default=None, help="target sampling interval, seconds")
    p.add_argument("--noise-sigma", type=float, default=None, help="added noise sigma, meters")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, TrajectoryParseError, NetworkBuildError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MatchingError as exc:
        print(f"matching failed: {exc}", file=sys.stderr)
        return EXIT_MATCHING


if __name__ == "__main__":
    sys.exit(main())
