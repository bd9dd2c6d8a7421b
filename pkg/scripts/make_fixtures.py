#!/usr/bin/env python3
"""Regenerate the bundled networks and the demo trajectory in data/."""

import json
from pathlib import Path

import numpy as np

from pfmatch.fixtures import grid_geojson, y_junction_geojson
from pfmatch.roadnet import load_network_geojson
from pfmatch.simulate import SimConfig, simulate
from pfmatch.trajectory import format_trajectory

DATA = Path(__file__).resolve().parent.parent / "data"


def main() -> None:
    DATA.mkdir(exist_ok=True)

    y = y_junction_geojson()
    (DATA / "y_junction.geojson").write_text(json.dumps(y, indent=2) + "\n")
    print(f"wrote y_junction.geojson ({len(y['features'])} features)")

    grid = grid_geojson(rows=20, cols=20, block=100.0)
    (DATA / "grid_20x20.geojson").write_text(json.dumps(grid) + "\n")
    print(f"wrote grid_20x20.geojson ({len(grid['features'])} features)")

    net = load_network_geojson(grid)
    cfg = SimConfig(speed=10.0, duration=199.0, sample_interval=1.0, noise_sigma=5.0, seed=7)
    traj, truth = simulate(net, cfg, np.random.default_rng(cfg.seed))
    (DATA / "demo_trajectory.csv").write_text(format_trajectory(traj))
    (DATA / "demo_truth.json").write_text(
        json.dumps(
            {
                "path": list(truth.path),
                "positions": [{"edge": p.edge, "offset": p.offset} for p in truth.positions],
                "truncated": truth.truncated,
            },
            indent=2,
        )
        + "\n"
    )
    print(f"wrote demo_trajectory.csv ({len(traj.points)} points) and demo_truth.json")


if __name__ == "__main__":
    main()
