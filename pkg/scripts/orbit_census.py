#!/usr/bin/env python3
"""Periodic-point census with per-point Floquet detail.

Runs Newton shooting from the configured seed grid and prints one block
per distinct periodic point: the anchoring state, residual, Lefschetz
index, and the Floquet multiplier magnitudes that decide stability.
"""

import argparse
from pathlib import Path

from mbloch.cli import build_integrator, build_pump, build_system, load_config
from mbloch.poincare import SeedGrid, find_all_periodic

DEFAULT_CONFIG = (
    Path(__file__).resolve().parents[1] / "configs" / "orbit_census.toml"
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(DEFAULT_CONFIG))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    params = build_system(cfg)
    pump = build_pump(cfg)
    icfg = build_integrator(cfg)
    body = cfg.get("find_periodic", {})
    grid = SeedGrid(
        maxwell_count=int(body.get("maxwell_count", 3)),
        sphere_count=int(body.get("sphere_count", 4)),
        R_bound=float(body.get("R_bound", 2.0)),
        N=params.N,
    )
    census = find_all_periodic(
        params,
        pump,
        icfg,
        grid,
        tol=float(body.get("tol", 1e-9)),
        max_iter=int(body.get("max_iter", 40)),
        workers=args.workers,
    )

    print(
        f"seeds {grid.size}, converged {census.n_converged},"
        f" distinct {len(census.points)}, index sum {census.index_sum}"
    )
    for i, pt in enumerate(census.points):
        label = "stable" if pt.stable else ("marginal" if pt.marginal else "unstable")
        print(f"\npoint {i}: {label}, index {pt.index:+d}, residual {pt.residual:.3e}")
        vec = pt.Y_sharp.to_vector()
        print(f"  A = {vec[0]: .6f}  B = {vec[1]: .6f}")
        for n in range(params.N):
            u, v, w = vec[2 + 3 * n : 5 + 3 * n]
            print(f"  molecule {n}: u = {u: .6f}  v = {v: .6f}  w = {w: .6f}")
        mags = ", ".join(f"{abs(m):.6f}" for m in pt.floquet)
        print(f"  multiplier magnitudes: {mags}")
    if census.warning:
        print(f"\nwarning: {census.warning}")


if __name__ == "__main__":
    main()
