"""End-to-end acceptance gate: ten numbered criteria, one line each.

Every test prints a single pass/fail line through the terminal-summary
hook in conftest so the whole gate can be read at a glance.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

import mbloch.diagnostics as dg
from mbloch.dynamics import (
    decay_pair,
    default_epsilon,
    field_full,
    field_modified,
    field_reduced,
    hamiltonian,
    lyapunov_form_bounds,
    lyapunov_gradient,
)
from mbloch.integrate import IntegratorConfig, integrate, rabi_reference
from mbloch.model import (
    FullState,
    GaugePhases,
    PumpConfig,
    ReducedState,
    SystemParams,
    gauge_act,
    hopf_project,
    hopf_section,
)
from mbloch.poincare import SeedGrid, default_modified_config, find_all_periodic

from conftest import ACCEPTANCE_LINES, random_full, random_reduced

SAMPLE1 = SystemParams(
    Omega=1.0, sigma=0.1, omega1=0.0, omega2=1.0, q=0.2, N=1, kappa=(0.4,)
)
SAMPLE2 = SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=1.0, q=0.2, N=2)
PUMP = PumpConfig(Omega_p=1.0, cosine=(0.5,))
T = PUMP.period

FINE = IntegratorConfig(abs_tol=1e-11, rel_tol=1e-11)
TEN = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10)
# the step ceiling keeps the accepted-step charge random walk under the
# 1e-9 drift budget over the full 100-period span
CAPPED = IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10, max_step=0.015)
QUICK = IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8)


def conclude(number: int, label: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    line = f"criterion {number:2d} {label}: {status} ({detail})"
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def hundred_periods():
    rng = np.random.default_rng(7)
    x0 = random_full(rng, n=2, radius=0.5)
    full = integrate("full", SAMPLE2, PUMP, CAPPED, x0, 0.0, 100.0 * T)
    red = integrate(
        "reduced", SAMPLE2, PUMP, CAPPED, hopf_project(x0), 0.0, 100.0 * T
    )
    return full, red


@pytest.fixture(scope="module")
def absorption_run():
    # strong cavity damping keeps the analytic entry time inside the span
    params = replace(SAMPLE2, sigma=1.0)
    rng = np.random.default_rng(11)
    s = rng.normal(size=(2, 3))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    y0 = ReducedState(A=1000.0, B=0.0, s=s)
    traj = integrate("reduced", params, PUMP, QUICK, y0, 0.0, 140.0, n_samples=2801)
    return params, traj


@pytest.fixture(scope="module")
def sample_census():
    grid = SeedGrid(maxwell_count=1, sphere_count=2, R_bound=1.0, N=1)
    return find_all_periodic(SAMPLE1, PUMP, FINE, grid, tol=1e-9, max_iter=40)


def test_criterion_01_conservation(hundred_periods):
    full, red = hundred_periods
    charge = full.norm_drift
    bloch = red.norm_drift
    ok = charge < 1e-9 and bloch < 1e-9
    conclude(
        1,
        "conservation over 100 periods",
        ok,
        f"charge drift {charge:.2e}, Bloch drift {bloch:.2e}, bound 1e-9",
    )


def test_criterion_02_reduction():
    rng = np.random.default_rng(20)
    worst = 0.0
    for k in range(20):
        N = (1, 2, 3)[k % 3]
        omega1 = float(rng.uniform(0.0, 0.3))
        params = SystemParams(
            Omega=float(rng.uniform(0.6, 1.4)),
            sigma=float(rng.uniform(0.05, 0.3)),
            omega1=omega1,
            omega2=omega1 + float(rng.uniform(0.5, 1.2)),
            q=float(rng.uniform(0.05, 0.3)),
            N=N,
        )
        pump = PumpConfig(Omega_p=1.0, cosine=(float(rng.uniform(0.1, 0.6)),))
        x0 = random_full(rng, n=N, radius=0.5)
        tf = integrate("full", params, pump, TEN, x0, 0.0, 10.0 * T, n_samples=201)
        tr = integrate(
            "reduced", params, pump, TEN, hopf_project(x0), 0.0, 10.0 * T,
            n_samples=201,
        )
        proj = np.array(
            [hopf_project(tf.state_at(i)).to_vector() for i in range(tf.n_samples)]
        )
        worst = max(worst, float(np.abs(proj - tr.states).max()))
    conclude(
        2,
        "Hopf-projected full vs reduced",
        worst < 1e-7,
        f"worst gap {worst:.2e} over 20 draws, bound 1e-7",
    )


def test_criterion_03_gauge_equivariance():
    rng = np.random.default_rng(31)
    x0 = random_full(rng, n=2, radius=1.0)
    thetas = tuple(rng.uniform(0.0, 2.0 * np.pi, size=2))
    x_rot = gauge_act(GaugePhases(thetas=thetas), x0)
    ref = integrate("full", SAMPLE2, PUMP, FINE, x0, 0.0, 3.0 * T, n_samples=61)
    rot = integrate("full", SAMPLE2, PUMP, FINE, x_rot, 0.0, 3.0 * T, n_samples=61)
    d_maxwell = float(np.abs(rot.states[:, :2] - ref.states[:, :2]).max())
    d_current = float(
        np.abs(
            dg.sample_current(rot, SAMPLE2) - dg.sample_current(ref, SAMPLE2)
        ).max()
    )
    _, w_ref = dg.population_inversion(ref)
    _, w_rot = dg.population_inversion(rot)
    d_inversion = float(np.abs(w_rot - w_ref).max())
    worst = max(d_maxwell, d_current, d_inversion)
    conclude(
        3,
        "gauge equivariance of observables",
        worst < 1e-9,
        f"maxwell {d_maxwell:.2e}, current {d_current:.2e},"
        f" inversion {d_inversion:.2e}, bound 1e-9",
    )


def _hamilton_form_gap(params, pump, t, x):
    dA, dB, dC = field_full(params, pump, t, x)
    xv = x.to_vector()
    h = 1e-6
    grad = np.empty_like(xv)
    for i in range(xv.size):
        e = np.zeros_like(xv)
        e[i] = h
        up = hamiltonian(params, pump, t, FullState.from_vector(xv + e, tol=np.inf))
        dn = hamiltonian(params, pump, t, FullState.from_vector(xv - e, tol=np.inf))
        grad[i] = (up - dn) / (2.0 * h)
    c2 = params.c**2
    lhs = [dA / c2, dB / c2]
    rhs = [grad[1], -grad[0] - params.sigma * x.B / c2]
    for m in range(x.N):
        for l in range(2):
            k = 2 + 4 * m + 2 * l
            lhs.append(1j * params.hbar * dC[m, l])
            rhs.append(0.5 * (grad[k] + 1j * grad[k + 1]))
    lhs = np.asarray(lhs)
    rhs = np.asarray(rhs)
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(lhs)))))


def test_criterion_04_hamiltonian_consistency():
    rng = np.random.default_rng(41)
    worst = 0.0
    for _ in range(100):
        x = random_full(rng, n=2, radius=2.0)
        t = float(rng.uniform(0.0, T))
        worst = max(worst, _hamilton_form_gap(SAMPLE2, PUMP, t, x))
    conclude(
        4,
        "Hamilton-with-dissipation form",
        worst < 1e-6,
        f"worst relative gap {worst:.2e} at 100 states, bound 1e-6",
    )


def test_criterion_05_decay_inequality(absorption_run):
    eps = default_epsilon(SAMPLE2)
    gamma, D = decay_pair(SAMPLE2, eps)
    Om2 = SAMPLE2.Omega**2
    snap = replace(QUICK, renormalize=True)
    rng = np.random.default_rng(51)
    worst_diff = -math.inf
    for _ in range(100):
        y0 = random_reduced(rng, n=2, radius=float(rng.uniform(1.0, 30.0)))
        traj = integrate("reduced", SAMPLE2, PUMP, snap, y0, 0.0, T, n_samples=33)
        A = traj.states[:, 0]
        B = traj.states[:, 1]
        j = dg.sample_current(traj, SAMPLE2)
        V = 0.5 * (Om2 * A**2 + B**2) + eps * A * B
        dVdt = (Om2 * A + eps * B) * B + (B + eps * A) * (
            -Om2 * A - SAMPLE2.sigma * B + SAMPLE2.c * j
        )
        scale = np.maximum(1.0, np.maximum(np.abs(dVdt), gamma * np.abs(V) + D))
        worst_diff = max(
            worst_diff, float(np.max((dVdt - (-gamma * V + D)) / scale))
        )

    params, big = absorption_run
    eps_b = default_epsilon(params)
    gamma_b, D_b = decay_pair(params, eps_b)
    A = big.states[:, 0]
    B = big.states[:, 1]
    V = 0.5 * (params.Omega**2 * A**2 + B**2) + eps_b * A * B
    dt = big.times - big.times[0]
    envelope = V[0] * np.exp(-gamma_b * dt) + (D_b / gamma_b) * (
        1.0 - np.exp(-gamma_b * dt)
    )
    env_violation = float(np.max((V - envelope) / np.maximum(1.0, envelope)))

    ok = worst_diff <= 1e-9 and env_violation <= 1e-9
    conclude(
        5,
        "Lyapunov decay inequality",
        ok,
        f"differential excess {worst_diff:.2e} on 100 trajectories,"
        f" envelope excess {env_violation:.2e} from radius 1e3",
    )


def test_criterion_06_apriori_entry(absorption_run):
    params, traj = absorption_run
    eps = default_epsilon(params)
    gamma, D = decay_pair(params, eps)
    a1, a2 = lyapunov_form_bounds(params, eps)
    d1 = a2 / a1
    d2 = D / (gamma * a1)
    M2 = traj.states[:, 0] ** 2 + traj.states[:, 1] ** 2
    dt = traj.times - traj.times[0]
    envelope = d1 * M2[0] * np.exp(-gamma * dt) + d2
    env_violation = float(np.max((M2 - envelope) / np.maximum(1.0, envelope)))

    ball = (math.sqrt(d2) + 1.0) ** 2
    inside = np.flatnonzero(M2 <= ball)
    entry_bound = math.log(d1 * M2[0]) / gamma
    entry = float(dt[inside[0]]) if inside.size else math.inf
    ok = env_violation <= 1e-9 and 0.0 < entry <= 1.2 * entry_bound
    conclude(
        6,
        "a priori contraction and entry time",
        ok,
        f"entry {entry:.1f} vs bound {entry_bound:.1f} (within 20%),"
        f" envelope excess {env_violation:.2e}",
    )


def test_criterion_07_integration_oracles():
    # Rabi: one molecule, zero back-action, constant drive via the offset
    frozen = SystemParams(
        Omega=1.0, sigma=0.1, omega1=0.3, omega2=1.1, q=1.0, N=1, kappa=(0.0,)
    )
    pump = PumpConfig(Omega_p=1.0, offset=0.3)
    C0 = np.array([0.6 + 0.0j, 0.0 + 0.8j])
    traj = integrate(
        "full", frozen, pump, FINE,
        FullState(A=0.0, B=0.0, C=C0.reshape(1, 2)), 0.0, 8.0, n_samples=2,
    )
    C_num = traj.states[-1, 2::2] + 1j * traj.states[-1, 3::2]
    C_ref = rabi_reference(frozen, 0.3, C0, 8.0)
    rabi_err = float(np.abs(C_num - C_ref).max())

    # decoupled cavity against the damped-oscillator closed form
    osc = SystemParams(Omega=1.3, sigma=0.4, omega1=0.0, omega2=1.0, q=0.0, N=1)
    y0 = ReducedState(A=1.0, B=0.0, s=np.array([[0.0, 0.0, 1.0]]))
    t1 = 20.0
    traj = integrate(
        "reduced", osc, PumpConfig(Omega_p=1.0), FINE, y0, 0.0, t1, n_samples=2
    )
    wd = math.sqrt(osc.Omega**2 - osc.sigma**2 / 4.0)
    decay = math.exp(-osc.sigma * t1 / 2.0)
    A_ref = decay * (
        math.cos(wd * t1) + (osc.sigma / (2.0 * wd)) * math.sin(wd * t1)
    )
    B_ref = -decay * (osc.Omega**2 / wd) * math.sin(wd * t1)
    osc_err = max(
        abs(float(traj.states[-1, 0]) - A_ref),
        abs(float(traj.states[-1, 1]) - B_ref),
    )

    # measured convergence order of the fixed-step integrator
    rng = np.random.default_rng(71)
    y0 = random_reduced(rng, n=2, radius=1.0)
    ref = integrate("reduced", SAMPLE2, PUMP, FINE, y0, 0.0, 2.0, n_samples=2)
    steps = [0.2, 0.1, 0.05, 0.025]
    errs = []
    for h in steps:
        icfg = IntegratorConfig(method="rk4", step=h)
        out = integrate("reduced", SAMPLE2, PUMP, icfg, y0, 0.0, 2.0, n_samples=2)
        errs.append(float(np.abs(out.states[-1] - ref.states[-1]).max()))
    order = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])

    ok = rabi_err <= 1e-8 and osc_err <= 1e-8 and order >= 3.8
    conclude(
        7,
        "closed-form oracles and RK4 order",
        ok,
        f"rabi {rabi_err:.2e}, oscillator {osc_err:.2e}, order {order:.2f}",
    )


def test_criterion_08_decoupled_census():
    dec = SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=0.75, q=0.0, N=1)
    grid = SeedGrid(maxwell_count=3, sphere_count=4, R_bound=1.5, N=1)
    census = find_all_periodic(dec, PUMP, FINE, grid, tol=1e-10)
    lam = -dec.sigma / 2.0 + 1j * math.sqrt(dec.Omega**2 - dec.sigma**2 / 4.0)
    targets = (np.exp(lam * T), np.exp(np.conj(lam) * T))
    fl_gap = math.inf
    if census.points:
        fl_gap = 0.0
        for pt in census.points:
            mults = np.asarray(pt.floquet, dtype=complex)
            for tgt in targets:
                fl_gap = max(fl_gap, float(np.min(np.abs(mults - tgt))))
    one_ok = (
        len(census.points) == 2
        and all(pt.index == 1 for pt in census.points)
        and census.index_sum == 2
        and fl_gap <= 1e-6
    )

    dec2 = replace(dec, N=2, kappa=None)
    grid2 = SeedGrid(maxwell_count=1, sphere_count=2, R_bound=1.5, N=2)
    census2 = find_all_periodic(dec2, PUMP, FINE, grid2, tol=1e-10)
    two_ok = len(census2.points) == 4 and census2.index_sum == 4

    conclude(
        8,
        "decoupled fixed-point census",
        one_ok and two_ok,
        f"N=1: {len(census.points)} points sum {census.index_sum},"
        f" floquet gap {fl_gap:.2e};"
        f" N=2: {len(census2.points)} points sum {census2.index_sum}",
    )


def test_criterion_09_coupled_periodic_orbit(sample_census):
    converged = [pt for pt in sample_census.points if pt.converged]
    best = min(converged, key=lambda pt: pt.residual) if converged else None
    residual = best.residual if best else math.inf

    per_gap = math.inf
    unitary_residual = math.inf
    if best is not None:
        x0 = hopf_section(best.Y_sharp)
        traj = integrate(
            "full", SAMPLE1, PUMP, FINE, x0, 0.0, 5.0 * T, n_samples=321
        )
        m = 64
        maxwell = traj.states[:, :2]
        per_gap = float(np.abs(maxwell[m:] - maxwell[:-m]).max())
        _, unitary_residual = dg.gauge_factor(traj, T)

    ok = residual <= 1e-8 and per_gap <= 1e-7 and unitary_residual <= 1e-7
    conclude(
        9,
        "pumped sample-system orbit",
        ok,
        f"newton residual {residual:.2e}, maxwell periodicity {per_gap:.2e},"
        f" unitary factor {unitary_residual:.2e}",
    )


def test_criterion_10_modified_field(sample_census):
    mcfg = default_modified_config(SAMPLE1)
    rng = np.random.default_rng(101)

    def state_at_radius(rho):
        phi = float(rng.uniform(0.0, 2.0 * np.pi))
        s = rng.normal(size=(1, 3))
        s /= np.linalg.norm(s)
        return ReducedState(A=rho * math.cos(phi), B=rho * math.sin(phi), s=s)

    inside_same = True
    for _ in range(100):
        y = state_at_radius(float(rng.uniform(0.0, mcfg.R)))
        t = float(rng.uniform(0.0, T))
        fm = field_modified(SAMPLE1, PUMP, mcfg, t, y)
        fr = field_reduced(SAMPLE1, PUMP, t, y)
        inside_same &= (
            fm[0] == fr[0] and fm[1] == fr[1] and np.array_equal(fm[2], fr[2])
        )

    radial_gap = 0.0
    tail_frozen = True
    for _ in range(100):
        y = state_at_radius(float(rng.uniform(1.01 * mcfg.R_c, 5.0 * mcfg.R_c)))
        dA, dB, ds = field_modified(
            SAMPLE1, PUMP, mcfg, float(rng.uniform(0.0, T)), y
        )
        rho2 = y.A**2 + y.B**2
        radial_gap = max(
            radial_gap, abs(dA + y.A / rho2), abs(dB + y.B / rho2)
        )
        tail_frozen &= bool(np.all(ds == 0.0))

    descent = True
    for _ in range(1000):
        y = state_at_radius(float(rng.uniform(1.001 * mcfg.R, 10.0 * mcfg.R_c)))
        dA, dB, _ = field_modified(
            SAMPLE1, PUMP, mcfg, float(rng.uniform(0.0, T)), y
        )
        gA, gB = lyapunov_gradient(SAMPLE1, mcfg.epsilon_lyap, y.A, y.B)
        descent &= dA * gA + dB * gB < 0.0

    grid = SeedGrid(maxwell_count=1, sphere_count=2, R_bound=1.0, N=1)
    census_mod = find_all_periodic(
        SAMPLE1, PUMP, FINE, grid, tol=1e-9, max_iter=40,
        field_kind="modified", mcfg=mcfg,
    )
    match_gap = math.inf
    if len(census_mod.points) == len(sample_census.points) and sample_census.points:
        match_gap = 0.0
        for pt in sample_census.points:
            vec = pt.Y_sharp.to_vector()
            nearest = min(
                float(np.abs(vec - other.Y_sharp.to_vector()).max())
                for other in census_mod.points
            )
            match_gap = max(match_gap, nearest)

    ok = (
        inside_same
        and radial_gap <= 1e-15
        and tail_frozen
        and descent
        and match_gap <= 1e-8
    )
    conclude(
        10,
        "compactified field",
        ok,
        f"interior identical {inside_same}, tail radial gap {radial_gap:.1e},"
        f" descent at 1000 points {descent}, fixed-point match {match_gap:.2e}",
    )
