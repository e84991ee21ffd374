#!/usr/bin/env python3
"""High-amplitude contraction portrait.

For a ladder of initial cavity amplitudes, integrates the reduced
system and reports the measured entry time into the residual ball
against the analytic crossing-time bound, together with the worst
excess of |M(t)|^2 over its decay envelope.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from mbloch.cli import build_integrator, build_pump, build_system, load_config
from mbloch.dynamics import decay_pair, default_epsilon, lyapunov_form_bounds
from mbloch.integrate import integrate
from mbloch.model import ReducedState

DEFAULT_CONFIG = (
    Path(__file__).resolve().parents[1] / "configs" / "decay_portrait.toml"
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(DEFAULT_CONFIG))
    ap.add_argument(
        "--radii", type=float, nargs="+", default=[10.0, 100.0, 1000.0]
    )
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = load_config(args.config)
    params = build_system(cfg)
    pump = build_pump(cfg)
    icfg = build_integrator(cfg)

    eps = default_epsilon(params)
    gamma, D = decay_pair(params, eps)
    a1, a2 = lyapunov_form_bounds(params, eps)
    d1 = a2 / a1
    d2 = D / (gamma * a1)
    ball = math.sqrt(d2) + 1.0
    print(
        f"epsilon = {eps:.6f}, gamma = {gamma:.6f}, D = {D:.6f},"
        f" residual ball radius = {ball:.3f}"
    )
    print(f"{'radius':>10}  {'entry':>10}  {'bound':>10}  {'envelope excess':>16}")

    rng = np.random.default_rng(args.seed)
    for R0 in args.radii:
        s = rng.normal(size=(params.N, 3))
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        y0 = ReducedState(A=float(R0), B=0.0, s=s)
        bound = max(0.0, math.log(d1 * R0**2) / gamma)
        span = 1.3 * bound + 10.0
        n_samples = int(min(8001, max(401, span / 0.05)))
        traj = integrate(
            "reduced", params, pump, icfg, y0, 0.0, span, n_samples=n_samples
        )
        M2 = traj.states[:, 0] ** 2 + traj.states[:, 1] ** 2
        dt = traj.times - traj.times[0]
        envelope = d1 * M2[0] * np.exp(-gamma * dt) + d2
        excess = float(np.max((M2 - envelope) / np.maximum(1.0, envelope)))
        inside = np.flatnonzero(M2 <= ball**2)
        entry = float(dt[inside[0]]) if inside.size else math.inf
        print(f"{R0:10.1f}  {entry:10.2f}  {bound:10.2f}  {excess:16.3e}")


if __name__ == "__main__":
    main()
