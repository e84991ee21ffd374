"""Conservation, decay, and periodicity checks over sampled trajectories.

Every operation returns a :class:`VerificationReport` carrying one or
more named :class:`CheckResult` rows plus the trajectory metadata they
were computed from.  Checks recompute their quantities from the raw
samples, so they are independent of how the trajectory was produced.
dV/dt is evaluated analytically from the field, never by differencing
samples; a sampled difference is kept only as a secondary estimate in
the details.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dynamics
from .integrate import Trajectory, molecule_norm_error
from .model import SystemParams, ValidationError

#: default drift bound for the conservation checks
DRIFT_BOUND = 1e-9

#: relative slack granted to inequality checks for roundoff
INEQ_SLACK = 1e-8

#: overlap magnitude under which the relative phase is undefined
OVERLAP_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    """One named check: measured value against its bound."""

    name: str
    measured: float
    bound: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": _plain(float(self.measured)),
            "bound": _plain(float(self.bound)),
            "passed": bool(self.passed),
            "details": {str(k): _plain(v) for k, v in self.details.items()},
        }


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass(frozen=True)
class VerificationReport:
    """Named check rows plus the provenance they were computed from."""

    checks: tuple
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "meta": {str(k): _plain(v) for k, v in self.meta.items()},
        }

    def table(self) -> str:
        lines = [f"{'check':<28} {'measured':>13} {'bound':>13}  status"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{c.name:<28} {c.measured:>13.4e} {c.bound:>13.4e}  {status}"
            )
        return "\n".join(lines)


def combine(*reports: VerificationReport, meta: Optional[dict] = None) -> VerificationReport:
    """Merge reports into one; later metadata wins on key collisions."""
    checks = []
    merged: dict = {}
    for r in reports:
        checks.extend(r.checks)
        merged.update(r.meta)
    if meta:
        merged.update(meta)
    return VerificationReport(checks=tuple(checks), meta=merged)


def _traj_meta(traj: Trajectory) -> dict:
    return {
        "kind": traj.kind,
        "n_samples": traj.n_samples,
        "t_start": float(traj.times[0]),
        "t_end": float(traj.times[-1]),
        "params_digest": traj.params_digest,
    }


# ---------------------------------------------------------------------------
# conservation
# ---------------------------------------------------------------------------


def check_charge(traj: Trajectory, bound: float = DRIFT_BOUND) -> VerificationReport:
    """Largest per-molecule charge deviation from 1 over the samples."""
    if traj.kind != "full":
        raise ValidationError(
            f"charge conservation applies to full trajectories, got {traj.kind!r}"
        )
    measured = molecule_norm_error("full", traj.states)
    row = CheckResult(
        name="charge_conservation",
        measured=measured,
        bound=bound,
        passed=measured <= bound,
    )
    return VerificationReport(checks=(row,), meta=_traj_meta(traj))


def check_sphere_norm(traj: Trajectory, bound: float = DRIFT_BOUND) -> VerificationReport:
    """Largest Bloch-vector norm deviation from 1 over the samples."""
    if traj.kind == "full":
        raise ValidationError("sphere-norm drift applies to reduced trajectories")
    measured = molecule_norm_error(traj.kind, traj.states)
    row = CheckResult(
        name="sphere_norm",
        measured=measured,
        bound=bound,
        passed=measured <= bound,
    )
    return VerificationReport(checks=(row,), meta=_traj_meta(traj))


# ---------------------------------------------------------------------------
# cavity decay estimates
# ---------------------------------------------------------------------------


def sample_current(traj: Trajectory, params: SystemParams) -> np.ndarray:
    """Current j at every sample row."""
    kappa = params.kappa_array
    if traj.kind == "full":
        C1 = traj.states[:, 2::4] + 1j * traj.states[:, 3::4]
        C2 = traj.states[:, 4::4] + 1j * traj.states[:, 5::4]
        return (kappa * np.imag(np.conj(C1) * C2)).sum(axis=1)
    v = traj.states[:, 3::3]
    return (0.5 * kappa * v).sum(axis=1)


def _cavity_dVdt(traj, params, eps):
    """Analytic dV/dt along the cavity field with the sampled current."""
    A = traj.states[:, 0]
    B = traj.states[:, 1]
    j = sample_current(traj, params)
    Om2 = params.Omega**2
    dBdt = -Om2 * A - params.sigma * B + params.c * j
    return (Om2 * A + eps * B) * B + (B + eps * A) * dBdt


def check_lyapunov(
    traj: Trajectory,
    params: SystemParams,
    cfg: dynamics.ModifiedFieldConfig,
    slack_rel: float = INEQ_SLACK,
) -> VerificationReport:
    """Differential decay inequality and its integrated envelope.

    At every sample, dV/dt must satisfy dV/dt <= -gamma V + D, and V(t)
    must lie under V(0) e^{-gamma t} + (D/gamma)(1 - e^{-gamma t}).
    Both are algebraic facts for unit-norm molecule states; the slack
    covers roundoff and sampling drift only.
    """
    eps = cfg.epsilon_lyap
    gamma, D = dynamics.lyapunov_decay_coeffs(params, cfg)
    A = traj.states[:, 0]
    B = traj.states[:, 1]
    V = dynamics.lyapunov_V(params, cfg, A, B)
    dVdt = _cavity_dVdt(traj, params, eps)

    scale = np.maximum(1.0, np.maximum(np.abs(dVdt), np.abs(gamma * V) + D))
    diff_violation = float(np.max((dVdt - (-gamma * V + D)) / scale))

    dt = traj.times - traj.times[0]
    envelope = V[0] * np.exp(-gamma * dt) + (D / gamma) * (1.0 - np.exp(-gamma * dt))
    env_scale = np.maximum(1.0, np.abs(envelope))
    env_violation = float(np.max((V - envelope) / env_scale))

    fd_gap = None
    if traj.n_samples >= 3:
        fd = np.gradient(V, traj.times)
        fd_gap = float(np.max(np.abs(fd - dVdt)))

    rows = (
        CheckResult(
            name="lyapunov_differential",
            measured=diff_violation,
            bound=slack_rel,
            passed=diff_violation <= slack_rel,
            details={"dVdt_fd_gap": fd_gap},
        ),
        CheckResult(
            name="lyapunov_envelope",
            measured=env_violation,
            bound=slack_rel,
            passed=env_violation <= slack_rel,
        ),
    )
    meta = {**_traj_meta(traj), "gamma": gamma, "D": D, "epsilon": eps}
    return VerificationReport(checks=rows, meta=meta)


def check_apriori(
    traj: Trajectory,
    params: SystemParams,
    cfg: dynamics.ModifiedFieldConfig,
    slack_rel: float = INEQ_SLACK,
    entry_margin: float = 0.2,
) -> VerificationReport:
    """Cavity-amplitude envelope and entry into the residual ball.

    Checks |M(t)|^2 <= d1 |M(0)|^2 e^{-gamma t} + d2 sample-wise, with
    d1 = a2/a1 and d2 = D/(gamma a1), and that the first sample inside
    the ball |M| <= sqrt(d2) + 1 occurs no later than the envelope
    crossing time (1/gamma) log(d1 |M(0)|^2), within ``entry_margin``.
    """
    eps = cfg.epsilon_lyap
    gamma, D = dynamics.lyapunov_decay_coeffs(params, cfg)
    a1, a2 = dynamics.lyapunov_form_bounds(params, eps)
    d1 = a2 / a1
    d2 = D / (gamma * a1)

    M2 = traj.states[:, 0] ** 2 + traj.states[:, 1] ** 2
    dt = traj.times - traj.times[0]
    envelope = d1 * M2[0] * np.exp(-gamma * dt) + d2
    scale = np.maximum(1.0, envelope)
    env_violation = float(np.max((M2 - envelope) / scale))

    ball = (np.sqrt(d2) + 1.0) ** 2
    inside = np.flatnonzero(M2 <= ball)
    entry_bound = max(0.0, float(np.log(max(d1 * M2[0], 1e-300))) / gamma)
    entry_details: dict = {"ball_radius": float(np.sqrt(ball))}
    if inside.size:
        entry_time = float(dt[inside[0]])
        entry_ok = entry_time <= (1.0 + entry_margin) * entry_bound
    else:
        entry_time = float("inf")
        entry_ok = False
        if dt[-1] < (1.0 + entry_margin) * entry_bound:
            entry_details["note"] = "trajectory too short to reach the ball"

    rows = (
        CheckResult(
            name="apriori_envelope",
            measured=env_violation,
            bound=slack_rel,
            passed=env_violation <= slack_rel,
        ),
        CheckResult(
            name="apriori_entry",
            measured=entry_time,
            bound=(1.0 + entry_margin) * entry_bound,
            passed=entry_ok,
            details=entry_details,
        ),
    )
    meta = {
        **_traj_meta(traj),
        "gamma": gamma,
        "D": D,
        "d1": d1,
        "d2": d2,
        "entry_margin": entry_margin,
    }
    return VerificationReport(checks=rows, meta=meta)


# ---------------------------------------------------------------------------
# periodicity and gauge phase
# ---------------------------------------------------------------------------


def _aligned_offset(traj: Trajectory, T: float) -> int:
    """Sample count spanning one period on a uniform grid, or raise."""
    t = traj.times
    if t.size < 2:
        raise ValidationError("trajectory has too few samples")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(T)):
        raise ValidationError("periodicity checks need uniform sampling")
    m = int(round(T / dt[0]))
    if m < 1 or abs(m * dt[0] - T) > 1e-9 * max(1.0, abs(T)):
        raise ValidationError(
            f"sampling grid is not aligned with the period T={T!r}"
        )
    if m >= t.size:
        raise ValidationError("trajectory spans less than one period")
    return m


def check_periodicity(
    traj: Trajectory, T: float, tol: float = 1e-7
) -> VerificationReport:
    """Residual of the shift-by-T map over all aligned sample pairs.

    The cavity pair must return after each period for any kind; for
    reduced-space trajectories the Bloch components must return too.
    """
    m = _aligned_offset(traj, T)
    ahead = traj.states[m:]
    behind = traj.states[:-m]
    maxwell = float(
        np.max(np.linalg.norm(ahead[:, :2] - behind[:, :2], axis=1))
    )
    rows = [
        CheckResult(
            name="periodicity_maxwell",
            measured=maxwell,
            bound=tol,
            passed=maxwell <= tol,
            details={"pairs": int(ahead.shape[0])},
        )
    ]
    if traj.kind != "full":
        bloch = float(np.max(np.abs(ahead[:, 2:] - behind[:, 2:])))
        rows.append(
            CheckResult(
                name="periodicity_bloch",
                measured=bloch,
                bound=tol,
                passed=bloch <= tol,
            )
        )
    return VerificationReport(
        checks=tuple(rows), meta={**_traj_meta(traj), "T": float(T)}
    )


def gauge_factor(
    traj: Trajectory, T: float, anchor: Optional[float] = None
) -> tuple[np.ndarray, float]:
    """Per-molecule phase factors between t and t + T on a full trajectory.

    theta_n = arg <C_n(t), C_n(t+T)>; the returned residual is the
    largest norm of C_n(t+T) - e^{i theta_n} C_n(t).  The phase depends
    on the anchor time t in general, so callers interested in the drift
    of theta evaluate several anchors.  Raises when any overlap
    magnitude is below OVERLAP_TOL (undefined phase).
    """
    if traj.kind != "full":
        raise ValidationError("gauge factors require a full trajectory")
    m = _aligned_offset(traj, T)
    t = traj.times
    if anchor is None:
        i = 0
    else:
        i = int(np.argmin(np.abs(t - anchor)))
        if abs(t[i] - anchor) > 1e-9 * max(1.0, abs(T)):
            raise ValidationError(f"no sample at anchor time {anchor!r}")
    if i + m >= t.size:
        raise ValidationError("anchor leaves less than one period of samples")
    C_t = (traj.states[i, 2::2] + 1j * traj.states[i, 3::2]).reshape(-1, 2)
    C_T = (traj.states[i + m, 2::2] + 1j * traj.states[i + m, 3::2]).reshape(-1, 2)
    overlap = np.sum(np.conj(C_t) * C_T, axis=1)
    if np.any(np.abs(overlap) < OVERLAP_TOL):
        worst = int(np.argmin(np.abs(overlap)))
        raise ValidationError(
            f"gauge phase undefined: molecule {worst} overlap magnitude "
            f"{np.abs(overlap[worst]):.3e} below {OVERLAP_TOL:.0e}"
        )
    thetas = np.mod(np.angle(overlap), 2.0 * np.pi)
    residual = float(
        np.max(np.abs(C_T - np.exp(1j * np.angle(overlap))[:, None] * C_t))
    )
    return thetas, residual


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def population_inversion(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-molecule inversion w_n(t); shape (n_samples, N).

    For full trajectories w = |C2|^2 - |C1|^2, which matches the w
    component of the Bloch projection exactly.
    """
    if traj.kind == "full":
        C1 = traj.states[:, 2::4] + 1j * traj.states[:, 3::4]
        C2 = traj.states[:, 4::4] + 1j * traj.states[:, 5::4]
        w = np.abs(C2) ** 2 - np.abs(C1) ** 2
    else:
        w = traj.states[:, 4::3]
    return traj.times.copy(), w
