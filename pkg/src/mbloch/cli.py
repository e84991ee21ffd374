"""Command-line front end: config parsing, run orchestration, persistence.

Commands: simulate, find-periodic, sweep, verify, rabi.  Configuration
is a TOML file with fixed sections; unknown sections or keys are
rejected.  ``--set section.key=value`` overrides individual entries.
Result documents are JSON with sorted keys, embedding the resolved
configuration and its content digest; time series go to CSV.  Nothing
in an output document depends on the worker count or the clock.

Exit codes: 0 success, 1 check or solve failure, 2 configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import diagnostics as dg
from . import dynamics
from .dynamics import ModifiedFieldConfig
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    integrate,
    rabi_reference,
    write_trajectory_csv,
)
from .model import (
    FullState,
    GaugePhases,
    PumpConfig,
    ReducedState,
    SystemParams,
    ValidationError,
    content_digest,
    gauge_act,
    hopf_project,
)
from .poincare import (
    SeedGrid,
    continuation,
    default_modified_config,
    find_all_periodic,
    newton_fixed_point,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    """Configuration file or override rejected; maps to exit code 2."""


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

_NUMBER = (int, float)

SCHEMA = {
    "system": {
        "Omega": _NUMBER,
        "sigma": _NUMBER,
        "omega1": _NUMBER,
        "omega2": _NUMBER,
        "q": _NUMBER,
        "c": _NUMBER,
        "hbar": _NUMBER,
        "N": int,
        "kappa": list,
    },
    "pump": {
        "Omega_p": _NUMBER,
        "cosine": list,
        "sine": list,
        "offset": _NUMBER,
    },
    "integrator": {
        "method": str,
        "abs_tol": _NUMBER,
        "rel_tol": _NUMBER,
        "step": _NUMBER,
        "max_step": _NUMBER,
        "renormalize": bool,
        "sample_stride": int,
    },
    "modified": {
        "R": _NUMBER,
        "R_c": _NUMBER,
        "epsilon_lyap": _NUMBER,
    },
    "simulate": {
        "kind": str,
        "t0": _NUMBER,
        "t1": _NUMBER,
        "periods": _NUMBER,
        "n_samples": int,
        "checks": list,
        "periodicity_tol": _NUMBER,
        "initial": dict,
    },
    "find_periodic": {
        "maxwell_count": int,
        "sphere_count": int,
        "R_bound": _NUMBER,
        "tol": _NUMBER,
        "max_iter": int,
        "field": str,
        "dedup_tol": _NUMBER,
    },
    "sweep": {
        "amplitudes": list,
        "start": _NUMBER,
        "stop": _NUMBER,
        "count": int,
    },
    "rabi": {
        "a": _NUMBER,
        "C0": list,
        "t1": _NUMBER,
        "n_samples": int,
        "tol": _NUMBER,
    },
    "output": {"dir": str},
    "verify": {"renormalize": bool, "draws": int},
}

_INITIAL_KEYS = {"A", "B", "C", "s", "seed"}


def _check_schema(cfg: dict) -> None:
    for section, body in cfg.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            if key == "initial" and section == "simulate":
                if not isinstance(value, dict):
                    raise ConfigError("simulate.initial must be a table")
                extra = set(value) - _INITIAL_KEYS
                if extra:
                    raise ConfigError(
                        f"unknown key simulate.initial.{sorted(extra)[0]}"
                    )
                continue
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            want = SCHEMA[section][key]
            if isinstance(value, bool) and want is not bool:
                raise ConfigError(f"{section}.{key} has the wrong type")
            if not isinstance(value, want):
                raise ConfigError(f"{section}.{key} has the wrong type")


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set needs section.key=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    parts = path.strip().split(".")
    if len(parts) < 2 or not all(parts):
        raise ConfigError(f"--set needs section.key=value, got {assignment!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"--set value {raw.strip()!r} is not valid: {exc}")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {path.strip()!r} crosses a scalar")
    node[parts[-1]] = value


def load_config(path: str, sets: tuple = ()) -> dict:
    """Parse a TOML config, apply overrides, and validate the schema."""
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")
    for assignment in sets:
        _apply_set(cfg, assignment)
    _check_schema(cfg)
    return cfg


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"missing required section [{name}]")
    return cfg[name]


def build_system(cfg: dict) -> SystemParams:
    body = _section(cfg, "system")
    kwargs = dict(body)
    if "kappa" in kwargs:
        kwargs["kappa"] = tuple(float(k) for k in kwargs["kappa"])
    try:
        return SystemParams(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[system]: {exc}")


def build_pump(cfg: dict) -> PumpConfig:
    body = _section(cfg, "pump")
    kwargs = dict(body)
    for key in ("cosine", "sine"):
        if key in kwargs:
            kwargs[key] = tuple(float(x) for x in kwargs[key])
    try:
        return PumpConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[pump]: {exc}")


def build_integrator(cfg: dict) -> IntegratorConfig:
    body = dict(cfg.get("integrator", {}))
    if "max_step" not in body:
        body["max_step"] = math.inf
    try:
        return IntegratorConfig(**body)
    except TypeError as exc:
        raise ConfigError(f"[integrator]: {exc}")


def build_modified(
    cfg: dict, params: SystemParams
) -> Optional[ModifiedFieldConfig]:
    if "modified" not in cfg:
        return None
    body = dict(cfg["modified"])
    if "epsilon_lyap" not in body:
        body["epsilon_lyap"] = dynamics.default_epsilon(params)
    if "R" not in body:
        return default_modified_config(params, eps=body["epsilon_lyap"])
    if "R_c" not in body:
        body["R_c"] = body["R"] + 1.0
    try:
        return ModifiedFieldConfig(**body)
    except TypeError as exc:
        raise ConfigError(f"[modified]: {exc}")


def _modified_or_default(
    cfg: dict, params: SystemParams
) -> ModifiedFieldConfig:
    mcfg = build_modified(cfg, params)
    if mcfg is None:
        mcfg = default_modified_config(params)
    return mcfg


# ---------------------------------------------------------------------------
# output documents
# ---------------------------------------------------------------------------


def _write_doc(out_dir: str, name: str, payload: dict, cfg: dict) -> Path:
    doc = dict(payload)
    doc["config"] = cfg
    doc["digest"] = content_digest(cfg)
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _initial_state(cfg_sim: dict, params: SystemParams, kind: str):
    body = cfg_sim.get("initial", {})
    A = float(body.get("A", 0.0))
    B = float(body.get("B", 0.0))
    reduced = kind != "full"
    if "seed" in body:
        rng = np.random.default_rng(int(body["seed"]))
        if reduced:
            s = rng.normal(size=(params.N, 3))
            s /= np.linalg.norm(s, axis=1, keepdims=True)
            return ReducedState(A=A, B=B, s=s)
        C = rng.normal(size=(params.N, 2)) + 1j * rng.normal(size=(params.N, 2))
        C /= np.linalg.norm(C, axis=1, keepdims=True)
        return FullState(A=A, B=B, C=C)
    if reduced:
        if "s" not in body:
            raise ConfigError("simulate.initial needs s (or seed) for this kind")
        s = np.asarray(body["s"], dtype=float)
        if s.shape != (params.N, 3):
            raise ConfigError(
                f"simulate.initial.s must be {params.N} rows of [u, v, w]"
            )
        return ReducedState(A=A, B=B, s=s)
    if "C" not in body:
        raise ConfigError("simulate.initial needs C (or seed) for kind full")
    rows = np.asarray(body["C"], dtype=float)
    if rows.shape != (params.N, 4):
        raise ConfigError(
            f"simulate.initial.C must be {params.N} rows of"
            " [re C1, im C1, re C2, im C2]"
        )
    C = rows[:, 0::2] + 1j * rows[:, 1::2]
    return FullState(A=A, B=B, C=C)


def cmd_simulate(cfg: dict, out_dir: str, workers: int) -> int:
    params = build_system(cfg)
    pump = build_pump(cfg)
    icfg = build_integrator(cfg)
    body = _section(cfg, "simulate")
    kind = body.get("kind", "reduced")
    if kind not in ("full", "reduced", "modified"):
        raise ConfigError(f"simulate.kind must be full|reduced|modified, got {kind!r}")
    t0 = float(body.get("t0", 0.0))
    if "t1" in body and "periods" in body:
        raise ConfigError("simulate: give either t1 or periods, not both")
    if "t1" in body:
        t1 = float(body["t1"])
    elif "periods" in body:
        t1 = t0 + float(body["periods"]) * pump.period
    else:
        raise ConfigError("simulate: needs t1 or periods")
    n_samples = body.get("n_samples")
    mcfg = None
    if kind == "modified":
        mcfg = _modified_or_default(cfg, params)
    state = _initial_state(body, params, kind)

    traj = integrate(
        kind, params, pump, icfg, state, t0, t1, mcfg=mcfg, n_samples=n_samples
    )

    reports = []
    requested = body.get("checks", ["conservation"])
    for name in requested:
        if name == "conservation":
            if kind == "full":
                reports.append(dg.check_charge(traj))
            else:
                reports.append(dg.check_sphere_norm(traj))
        elif name == "lyapunov":
            reports.append(dg.check_lyapunov(traj, params, _modified_or_default(cfg, params)))
        elif name == "apriori":
            reports.append(dg.check_apriori(traj, params, _modified_or_default(cfg, params)))
        elif name == "periodicity":
            tol = float(body.get("periodicity_tol", 1e-7))
            reports.append(dg.check_periodicity(traj, pump.period, tol=tol))
        else:
            raise ConfigError(f"simulate.checks: unknown check {name!r}")
    report = dg.combine(
        *reports,
        meta={
            "kind": kind,
            "t_start": t0,
            "t_end": t1,
            "n_samples": traj.n_samples,
            "norm_drift": traj.norm_drift,
            "renormalized": icfg.renormalize,
        },
    )

    csv_path = Path(out_dir) / "trajectory.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, csv_path)
    _write_doc(out_dir, "simulate_report.json", report.to_dict(), cfg)
    print(report.table())
    print(f"trajectory: {csv_path}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# find-periodic and sweep
# ---------------------------------------------------------------------------


def _census(cfg: dict, params: SystemParams, pump, icfg, workers: int):
    body = _section(cfg, "find_periodic")
    field_kind = body.get("field", "reduced")
    if field_kind not in ("reduced", "modified"):
        raise ConfigError("find_periodic.field must be reduced or modified")
    mcfg = None
    if field_kind == "modified":
        mcfg = _modified_or_default(cfg, params)
    if "R_bound" in body:
        R_bound = float(body["R_bound"])
    else:
        R_bound = (mcfg or _modified_or_default(cfg, params)).R
    grid = SeedGrid(
        maxwell_count=int(body.get("maxwell_count", 3)),
        sphere_count=int(body.get("sphere_count", 4)),
        R_bound=R_bound,
        N=params.N,
    )
    census = find_all_periodic(
        params,
        pump,
        icfg,
        grid,
        tol=float(body.get("tol", 1e-9)),
        max_iter=int(body.get("max_iter", 30)),
        field_kind=field_kind,
        mcfg=mcfg,
        workers=workers,
        dedup_tol=float(body.get("dedup_tol", 1e-6)),
    )
    return census, grid, field_kind


def cmd_find_periodic(cfg: dict, out_dir: str, workers: int) -> int:
    params = build_system(cfg)
    pump = build_pump(cfg)
    icfg = build_integrator(cfg)
    census, grid, field_kind = _census(cfg, params, pump, icfg, workers)
    payload = {
        "command": "find-periodic",
        "field": field_kind,
        "grid": {
            "maxwell_count": grid.maxwell_count,
            "sphere_count": grid.sphere_count,
            "R_bound": repr(float(grid.R_bound)),
            "seeds": grid.size,
        },
        "census": census.to_dict(),
    }
    _write_doc(out_dir, "periodic_points.json", payload, cfg)
    n = len(census.points)
    print(f"{n} distinct periodic point(s), index sum {census.index_sum}")
    for i, pt in enumerate(census.points):
        label = "stable" if pt.stable else ("marginal" if pt.marginal else "unstable")
        print(
            f"  [{i}] residual {pt.residual:.3e}  index {pt.index:+d}  {label}"
        )
    if census.warning:
        print(f"warning: {census.warning}")
    return EXIT_OK if n >= 1 else EXIT_CHECK_FAILED


def cmd_sweep(cfg: dict, out_dir: str, workers: int) -> int:
    params = build_system(cfg)
    pump = build_pump(cfg)
    icfg = build_integrator(cfg)
    body = _section(cfg, "sweep")
    if "amplitudes" in body:
        if any(k in body for k in ("start", "stop", "count")):
            raise ConfigError("sweep: give amplitudes or start/stop/count, not both")
        amplitudes = [float(a) for a in body["amplitudes"]]
    else:
        missing = [k for k in ("start", "stop", "count") if k not in body]
        if missing:
            raise ConfigError(f"sweep: missing {missing[0]} (or use amplitudes)")
        amplitudes = np.linspace(
            float(body["start"]), float(body["stop"]), int(body["count"])
        ).tolist()
    if not amplitudes:
        raise ConfigError("sweep: empty amplitude schedule")

    fp_body = _section(cfg, "find_periodic")
    census, _, field_kind = _census(
        cfg, params, pump.scaled(amplitudes[0]), icfg, workers
    )
    if not census.points:
        payload = {
            "command": "sweep",
            "branch": None,
            "error": "no converged point at the first amplitude",
        }
        _write_doc(out_dir, "branch.json", payload, cfg)
        print("sweep: no converged point at the first amplitude")
        return EXIT_CHECK_FAILED

    mcfg = None
    if field_kind == "modified":
        mcfg = _modified_or_default(cfg, params)
    branch = continuation(
        params,
        pump,
        icfg,
        start=census.points[0].Y_sharp,
        amplitudes=amplitudes,
        tol=float(fp_body.get("tol", 1e-9)),
        max_iter=int(fp_body.get("max_iter", 30)),
        field_kind=field_kind,
        mcfg=mcfg,
    )
    payload = {"command": "sweep", "branch": branch.to_dict()}
    _write_doc(out_dir, "branch.json", payload, cfg)
    print(
        f"branch: {len(branch.points)} point(s),"
        f" {len(branch.stability_changes)} stability change(s),"
        f" {'complete' if branch.completed else 'partial'}"
    )
    if not branch.completed:
        print(f"sweep stopped early: {branch.message}")
    return EXIT_OK if branch.completed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# rabi oracle comparison
# ---------------------------------------------------------------------------


def cmd_rabi(cfg: dict, out_dir: str, workers: int) -> int:
    params = build_system(cfg)
    icfg = build_integrator(cfg)
    body = _section(cfg, "rabi")
    a_const = float(body.get("a", 0.3))
    t1 = float(body.get("t1", 10.0))
    n_samples = int(body.get("n_samples", 101))
    tol = float(body.get("tol", 1e-8))
    row = body.get("C0", [1.0, 0.0, 0.0, 0.0])
    if len(row) != 4:
        raise ConfigError("rabi.C0 must be [re C1, im C1, re C2, im C2]")
    C0 = np.array([row[0] + 1j * row[1], row[2] + 1j * row[3]])
    nrm = np.linalg.norm(C0)
    if nrm == 0:
        raise ConfigError("rabi.C0 must be nonzero")
    C0 = C0 / nrm

    # Freeze the coupling: one molecule, no back-action, constant drive
    # through the pump offset, cavity at rest so a(t) = a exactly.
    frozen = replace(params, q=1.0, N=1, kappa=(0.0,))
    pump = PumpConfig(Omega_p=1.0, offset=a_const * frozen.c)
    state = FullState(A=0.0, B=0.0, C=C0.reshape(1, 2))
    traj = integrate("full", frozen, pump, icfg, state, 0.0, t1, n_samples=n_samples)

    C_num = traj.states[:, 2::2] + 1j * traj.states[:, 3::2]
    C_ref = rabi_reference(frozen, a_const, C0, traj.times)
    err = np.abs(C_num - C_ref).max(axis=1)
    worst = float(err.max())
    payload = {
        "command": "rabi",
        "a": repr(a_const),
        "t1": repr(t1),
        "max_error": repr(worst),
        "tol": repr(tol),
        "passed": bool(worst <= tol),
    }
    _write_doc(out_dir, "rabi.json", payload, cfg)
    print(f"rabi oracle: max error {worst:.3e} (tol {tol:.1e})")
    return EXIT_OK if worst <= tol else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _verify_params() -> tuple[SystemParams, PumpConfig]:
    params = SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=1.0, q=0.2, N=2)
    pump = PumpConfig(Omega_p=1.0, cosine=(0.5,))
    return params, pump


def _random_full_state(rng, N, radius=1.0) -> FullState:
    C = rng.normal(size=(N, 2)) + 1j * rng.normal(size=(N, 2))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    A, B = rng.normal(size=2) * radius
    return FullState(A=float(A), B=float(B), C=C)


def run_verification(
    workers: int = 1, renormalize: bool = False, draws: int = 3
) -> dg.VerificationReport:
    """Desk-scale invariant battery across all layers; runs in seconds."""
    rng = np.random.default_rng(0)
    params, pump = _verify_params()
    T = pump.period
    tight = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10, renormalize=renormalize)
    quick = IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8, renormalize=renormalize)
    # a step ceiling keeps the charge random walk well under the drift bound
    capped = replace(tight, max_step=0.02)
    checks = []

    # conservation without (or with, when asked) renormalization
    x0 = _random_full_state(rng, 2)
    traj_f = integrate("full", params, pump, capped, x0, 0.0, 5 * T)
    res = dg.check_charge(traj_f).checks[0]
    if renormalize:
        res = replace(res, details={**res.details, "renormalized": True})
    checks.append(res)
    y0 = hopf_project(x0)
    traj_r = integrate("reduced", params, pump, capped, y0, 0.0, 5 * T)
    res = dg.check_sphere_norm(traj_r).checks[0]
    if renormalize:
        res = replace(res, details={**res.details, "renormalized": True})
    checks.append(res)

    # Hopf reduction agreement on random draws
    worst = 0.0
    for _ in range(max(1, draws)):
        N = int(rng.integers(1, 3))
        pN = replace(params, N=N, kappa=None)
        xs = _random_full_state(rng, N, radius=0.5)
        tf = integrate("full", pN, pump, tight, xs, 0.0, 3 * T, n_samples=91)
        tr = integrate(
            "reduced", pN, pump, tight, hopf_project(xs), 0.0, 3 * T, n_samples=91
        )
        proj = np.array(
            [hopf_project(tf.state_at(i)).to_vector() for i in range(tf.n_samples)]
        )
        worst = max(worst, float(np.abs(proj - tr.states).max()))
    checks.append(
        dg.CheckResult(
            name="hopf_reduction",
            measured=worst,
            bound=1e-7,
            passed=worst <= 1e-7,
            details={"draws": draws},
        )
    )

    # gauge equivariance of the observables
    thetas = rng.uniform(0.0, 2.0 * np.pi, size=x0.C.shape[0])
    x_rot = gauge_act(GaugePhases(thetas=tuple(thetas)), x0)
    t_rot = integrate("full", params, pump, tight, x_rot, 0.0, 3 * T, n_samples=61)
    t_ref = integrate("full", params, pump, tight, x0, 0.0, 3 * T, n_samples=61)
    d_max = float(np.abs(t_rot.states[:, :2] - t_ref.states[:, :2]).max())
    _, w_rot = dg.population_inversion(t_rot)
    _, w_ref = dg.population_inversion(t_ref)
    d_inv = float(np.abs(w_rot - w_ref).max())
    d_cur = float(
        np.abs(
            dg.sample_current(t_rot, params) - dg.sample_current(t_ref, params)
        ).max()
    )
    g = max(d_max, d_inv, d_cur)
    checks.append(
        dg.CheckResult(
            name="gauge_equivariance",
            measured=g,
            bound=1e-9,
            passed=g <= 1e-9,
            details={"maxwell": d_max, "inversion": d_inv, "current": d_cur},
        )
    )

    # Hamiltonian consistency at random states
    worst = 0.0
    for _ in range(25):
        xs = _random_full_state(rng, 2, radius=2.0)
        worst = max(worst, _hamiltonian_residual(params, pump, xs, rng.uniform(0, T)))
    checks.append(
        dg.CheckResult(
            name="hamiltonian_consistency",
            measured=worst,
            bound=1e-6,
            passed=worst <= 1e-6,
            details={"states": 25},
        )
    )

    # decay inequality plus entry into the residual ball
    eps = dynamics.default_epsilon(params)
    mcfg = ModifiedFieldConfig(R=1.0, R_c=2.0, epsilon_lyap=eps)
    big = FullState(A=1000.0, B=0.0, C=x0.C)
    traj_big = integrate("full", params, pump, quick, big, 0.0, 150.0, n_samples=1501)
    checks.extend(dg.check_lyapunov(traj_big, params, mcfg).checks)
    checks.extend(dg.check_apriori(traj_big, params, mcfg).checks)

    # oracle comparisons
    checks.extend(_oracle_checks(params, rng))

    # decoupled census with its analytic floquet data
    checks.append(_census_check(workers))

    return dg.VerificationReport(
        checks=tuple(checks),
        meta={"renormalize": renormalize, "draws": draws},
    )


def _hamiltonian_residual(params, pump, state, t) -> float:
    """Relative gap between the dissipative Hamilton form and the field."""
    dA, dB, dC = dynamics.field_full(params, pump, t, state)
    h = 1e-6

    def H(A, B, C):
        return dynamics.hamiltonian(
            params, pump, t, FullState(A=A, B=B, C=C, tol=np.inf)
        )

    A, B, C = state.A, state.B, state.C
    dH_A = (H(A + h, B, C) - H(A - h, B, C)) / (2 * h)
    dH_B = (H(A, B + h, C) - H(A, B - h, C)) / (2 * h)
    got_A = params.c**2 * dH_B
    got_B = -params.c**2 * dH_A - params.sigma * B
    worst = abs(got_A - dA) / max(1.0, abs(dA))
    worst = max(worst, abs(got_B - dB) / max(1.0, abs(dB)))
    for n in range(params.N):
        for l in range(2):
            for part in (1.0, 1.0j):
                Cp = C.copy()
                Cp[n, l] += h * part
                Cm = C.copy()
                Cm[n, l] -= h * part
                d = (H(A, B, Cp) - H(A, B, Cm)) / (2 * h)
                if part == 1.0:
                    re = d
                else:
                    im = d
            wirt = 0.5 * (re + 1j * im)
            got = wirt / (1j * params.hbar)
            worst = max(worst, abs(got - dC[n, l]) / max(1.0, abs(dC[n, l])))
    return float(worst)


def _oracle_checks(params, rng) -> list:
    out = []
    icfg = IntegratorConfig(abs_tol=1e-11, rel_tol=1e-11)
    # rabi
    frozen = replace(params, q=1.0, N=1, kappa=(0.0,))
    a0 = 0.3
    pumpc = PumpConfig(Omega_p=1.0, offset=a0 * frozen.c)
    C0 = np.array([0.8, 0.6j])
    st = FullState(A=0.0, B=0.0, C=C0.reshape(1, 2))
    tr = integrate("full", frozen, pumpc, icfg, st, 0.0, 12.0, n_samples=25)
    C_num = tr.states[:, 2::2] + 1j * tr.states[:, 3::2]
    C_ref = rabi_reference(frozen, a0, C0, tr.times)
    e_rabi = float(np.abs(C_num - C_ref).max())
    out.append(
        dg.CheckResult(
            name="rabi_oracle",
            measured=e_rabi,
            bound=1e-8,
            passed=e_rabi <= 1e-8,
        )
    )
    # damped cavity, decoupled
    dec = replace(params, q=0.0, kappa=None, N=1)
    pump0 = PumpConfig(Omega_p=1.0)
    st = FullState(A=1.0, B=0.0, C=np.array([[1.0, 0.0]], dtype=complex))
    tr = integrate("full", dec, pump0, icfg, st, 0.0, 10.0, n_samples=21)
    om_d = math.sqrt(dec.Omega**2 - dec.sigma**2 / 4)
    t = tr.times
    A_ref = np.exp(-dec.sigma * t / 2) * (
        np.cos(om_d * t) + (dec.sigma / (2 * om_d)) * np.sin(om_d * t)
    )
    e_damp = float(np.abs(tr.states[:, 0] - A_ref).max())
    out.append(
        dg.CheckResult(
            name="damped_oscillator_oracle",
            measured=e_damp,
            bound=1e-8,
            passed=e_damp <= 1e-8,
        )
    )
    # rk4 order on the reduced system
    p1 = replace(params, N=1, kappa=None)
    y0 = hopf_project(_random_full_state(rng, 1, radius=0.5))
    pump = PumpConfig(Omega_p=1.0, cosine=(0.5,))
    ref = integrate(
        "reduced", p1, pump, IntegratorConfig(abs_tol=1e-13, rel_tol=1e-13),
        y0, 0.0, 2.0,
    ).final_state.to_vector()
    errs = []
    for n_steps in (40, 80):
        icfg4 = IntegratorConfig(method="rk4", step=2.0 / n_steps)
        got = integrate("reduced", p1, pump, icfg4, y0, 0.0, 2.0)
        errs.append(np.linalg.norm(got.final_state.to_vector() - ref))
    order = float(np.log2(errs[0] / errs[1]))
    out.append(
        dg.CheckResult(
            name="rk4_order",
            measured=order,
            bound=3.8,
            passed=order >= 3.8,
            details={"note": "bound is a lower bound", "errors": errs},
        )
    )
    return out


def _census_check(workers: int) -> dg.CheckResult:
    params = SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=0.75, q=0.0)
    pump = PumpConfig(Omega_p=1.0)
    icfg = IntegratorConfig(abs_tol=1e-11, rel_tol=1e-11)
    grid = SeedGrid(maxwell_count=3, sphere_count=4, R_bound=1.5, N=1)
    census = find_all_periodic(
        params, pump, icfg, grid, tol=1e-10, workers=workers
    )
    T = pump.period
    lam = -params.sigma / 2 + 1j * math.sqrt(params.Omega**2 - params.sigma**2 / 4)
    targets = {np.exp(lam * T), np.exp(np.conj(lam) * T)}
    worst = math.inf
    if len(census.points) == 2:
        worst = 0.0
        for pt in census.points:
            mults = np.asarray(pt.floquet, dtype=complex)
            for tgt in targets:
                worst = max(worst, float(np.min(np.abs(mults - tgt))))
    ok = (
        len(census.points) == 2
        and census.index_sum == 2
        and worst <= 1e-6
    )
    return dg.CheckResult(
        name="decoupled_census",
        measured=worst if worst < math.inf else -1.0,
        bound=1e-6,
        passed=ok,
        details={
            "points": len(census.points),
            "index_sum": census.index_sum,
        },
    )


def cmd_verify(cfg: dict, out_dir: str, workers: int) -> int:
    body = cfg.get("verify", {})
    # exercise validation of any provided sections before running
    if "system" in cfg:
        build_system(cfg)
    if "pump" in cfg:
        build_pump(cfg)
    report = run_verification(
        workers=workers,
        renormalize=bool(body.get("renormalize", False)),
        draws=int(body.get("draws", 3)),
    )
    _write_doc(out_dir, "verification.json", report.to_dict(), cfg)
    print(report.table())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker pool size")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="K=V",
        help="override a config entry, e.g. --set system.sigma=0.2",
    )
    p = argparse.ArgumentParser(
        prog="mbloch",
        description="Cavity plus two-level molecules: simulation and periodic orbits.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate and check a trajectory")
    sub.add_parser("find-periodic", parents=[common], help="periodic-point census")
    sub.add_parser("sweep", parents=[common], help="continuation in pump amplitude")
    sub.add_parser("verify", parents=[common], help="run the invariant battery")
    sub.add_parser("rabi", parents=[common], help="integrator vs closed form")
    return p


_COMMANDS = {
    "simulate": cmd_simulate,
    "find-periodic": cmd_find_periodic,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "rabi": cmd_rabi,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, tuple(args.set))
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        return _COMMANDS[args.command](cfg, args.out, args.workers)
    except (ConfigError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
