"""Time integration for the full, reduced, and compactified fields.

Two stepping modes sit behind one interface: a fixed-step classical
RK4 (used mostly for convergence-order measurements) and an adaptive
embedded RK45 driven through scipy's stepper object so that per-step
renormalization and dense sampling hooks stay under our control.

A step-size underflow in the adaptive mode raises
:class:`IntegrationError`; it is never silently clamped.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import RK45

from . import dynamics
from .model import (
    FullState,
    PumpConfig,
    ReducedState,
    SystemParams,
    ValidationError,
    content_digest,
)

State = Union[FullState, ReducedState]

FIELD_KINDS = ("full", "reduced", "modified")


class IntegrationError(RuntimeError):
    """Adaptive step-size underflow or other unrecoverable solver failure."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Stepping policy.

    ``method`` is "rk45" (adaptive embedded pair, the default) or "rk4"
    (fixed step of size ``step``).  ``renormalize`` rescales each
    molecule's amplitude pair (or Bloch vector) to unit norm after every
    accepted step; it is off by default so that conservation checks
    measure the raw integrator drift.
    """

    method: str = "rk45"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    step: float = 1e-3
    max_step: float = np.inf
    renormalize: bool = False
    sample_stride: int = 1

    def __post_init__(self) -> None:
        if self.method not in ("rk45", "rk4"):
            raise ValidationError(
                f"method must be 'rk45' or 'rk4', got {self.method!r}"
            )
        if not (np.isfinite(self.abs_tol) and self.abs_tol > 0.0):
            raise ValidationError(f"abs_tol must be positive, got {self.abs_tol}")
        if not (np.isfinite(self.rel_tol) and self.rel_tol > 0.0):
            raise ValidationError(f"rel_tol must be positive, got {self.rel_tol}")
        if not (np.isfinite(self.step) and self.step > 0.0):
            raise ValidationError(f"step must be positive, got {self.step}")
        if not self.max_step > 0.0:
            raise ValidationError(f"max_step must be positive, got {self.max_step}")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValidationError(
                f"sample_stride must be a positive integer, got {self.sample_stride}"
            )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution with provenance metadata.

    ``states`` holds one flat state vector per row in the layout of the
    field kind (see :mod:`mbloch.model`).  ``times`` is strictly
    increasing.  ``norm_drift`` is the largest deviation of any
    molecule norm (charge for the full system, Bloch-vector length for
    the reduced ones) from 1 over the samples.
    """

    kind: str
    times: np.ndarray
    states: np.ndarray
    params_digest: str
    integrator: IntegratorConfig
    norm_drift: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.states, dtype=float)
        if self.kind not in FIELD_KINDS:
            raise ValidationError(f"unknown trajectory kind {self.kind!r}")
        if t.ndim != 1 or y.ndim != 2 or y.shape[0] != t.size or t.size < 1:
            raise ValidationError("times and states shapes are inconsistent")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValidationError("sample times must be strictly increasing")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", y)

    @property
    def n_samples(self) -> int:
        return self.times.size

    @property
    def N(self) -> int:
        per = 4 if self.kind == "full" else 3
        return (self.states.shape[1] - 2) // per

    def state_at(self, i: int, tol: float = 1e-6) -> State:
        """Row i as a typed state; tol covers accumulated drift."""
        if self.kind == "full":
            return FullState.from_vector(self.states[i], tol=tol)
        return ReducedState.from_vector(self.states[i], tol=tol)

    @property
    def final_state(self) -> State:
        return self.state_at(-1)


def molecule_norm_error(kind: str, states: np.ndarray) -> float:
    """Largest per-molecule norm deviation from 1 across sample rows."""
    if kind == "full":
        re = states[:, 2::2]
        im = states[:, 3::2]
        charge = (re**2 + im**2).reshape(states.shape[0], -1, 2).sum(axis=2)
        return float(np.max(np.abs(charge - 1.0))) if charge.size else 0.0
    s = states[:, 2:].reshape(states.shape[0], -1, 3)
    return float(np.max(np.abs(np.linalg.norm(s, axis=2) - 1.0))) if s.size else 0.0


def _renormalizer(kind: str) -> Callable[[np.ndarray], np.ndarray]:
    if kind == "full":

        def project(yv: np.ndarray) -> np.ndarray:
            out = yv.copy()
            re = out[2::2].reshape(-1, 2)
            im = out[3::2].reshape(-1, 2)
            norm = np.sqrt((re**2 + im**2).sum(axis=1, keepdims=True))
            re /= norm
            im /= norm
            return out

    else:

        def project(yv: np.ndarray) -> np.ndarray:
            out = yv.copy()
            s = out[2:].reshape(-1, 3)
            s /= np.linalg.norm(s, axis=1, keepdims=True)
            return out

    return project


def _select_rhs(
    kind: str,
    params: SystemParams,
    pump: PumpConfig,
    mcfg: Optional[dynamics.ModifiedFieldConfig],
):
    if kind == "full":
        return dynamics.full_rhs(params, pump)
    if kind == "reduced":
        return dynamics.reduced_rhs(params, pump)
    if kind == "modified":
        if mcfg is None:
            raise ValidationError("the modified field requires a ModifiedFieldConfig")
        return dynamics.modified_rhs(params, pump, mcfg)
    raise ValidationError(f"unknown field kind {kind!r}")


def _state_vector(kind: str, state: State) -> np.ndarray:
    if kind == "full":
        if not isinstance(state, FullState):
            raise ValidationError(f"field kind 'full' needs a FullState, got {type(state).__name__}")
    else:
        if not isinstance(state, ReducedState):
            raise ValidationError(
                f"field kind {kind!r} needs a ReducedState, got {type(state).__name__}"
            )
    return state.to_vector()


# ---------------------------------------------------------------------------
# core drivers
# ---------------------------------------------------------------------------


def _drive_rk45(rhs, y0, t0, t1, icfg, project, collect):
    solver = RK45(
        rhs,
        t0,
        y0,
        t_bound=t1,
        rtol=icfg.rel_tol,
        atol=icfg.abs_tol,
        max_step=icfg.max_step,
    )
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            raise IntegrationError(
                f"adaptive step size underflow at t={solver.t:.6g}"
            )
        if project is not None:
            solver.y = project(solver.y)
            solver.f = rhs(solver.t, solver.y)  # keep the FSAL stage consistent
        collect(solver)
    if solver.status != "finished":
        raise IntegrationError(f"integration stopped in state {solver.status!r}")


def _rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    kind: str,
    params: SystemParams,
    pump: PumpConfig,
    icfg: IntegratorConfig,
    state: State,
    t0: float,
    t1: float,
    mcfg: Optional[dynamics.ModifiedFieldConfig] = None,
    n_samples: Optional[int] = None,
) -> Trajectory:
    """Integrate ``state`` over [t0, t1] and return the sampled solution.

    With ``n_samples`` the trajectory is sampled on the uniform grid
    linspace(t0, t1, n_samples) (dense interpolation between accepted
    steps); otherwise samples fall on accepted steps, thinned by
    ``icfg.sample_stride`` (the endpoints always kept).  ``t1 == t0``
    yields the single-sample trajectory.
    """
    if not (np.isfinite(t0) and np.isfinite(t1)):
        raise ValidationError("integration times must be finite")
    if t1 < t0:
        raise ValidationError(f"t1 must not precede t0, got [{t0}, {t1}]")
    dynamics._check_molecule_count(params, state.N)
    rhs = _select_rhs(kind, params, pump, mcfg)
    y0 = _state_vector(kind, state)
    digest = content_digest(params, pump, kind, mcfg)

    if n_samples is not None and n_samples < 1:
        raise ValidationError("n_samples must be at least 1")

    if t1 == t0:
        times = np.array([t0])
        states = y0[None, :].copy()
        return Trajectory(
            kind=kind,
            times=times,
            states=states,
            params_digest=digest,
            integrator=icfg,
            norm_drift=molecule_norm_error(kind, states),
            meta={"t0": t0, "t1": t1, "n_steps": 0},
        )

    project = _renormalizer(kind) if icfg.renormalize else None
    ts: list[float] = [t0]
    ys: list[np.ndarray] = [y0.copy()]
    n_steps = 0

    if n_samples is None:
        stride = icfg.sample_stride

        if icfg.method == "rk4":
            n = max(1, int(np.ceil((t1 - t0) / icfg.step)))
            h = (t1 - t0) / n
            y = y0.copy()
            for i in range(n):
                y = _rk4_step(rhs, t0 + i * h, y, h)
                if project is not None:
                    y = project(y)
                n_steps += 1
                if n_steps % stride == 0 or i == n - 1:
                    ts.append(t0 + (i + 1) * h)
                    ys.append(y.copy())
        else:
            def collect(solver):
                nonlocal n_steps
                n_steps += 1
                if n_steps % stride == 0 or solver.status == "finished":
                    ts.append(solver.t)
                    ys.append(solver.y.copy())

            _drive_rk45(rhs, y0, t0, t1, icfg, project, collect)
    else:
        grid = np.linspace(t0, t1, n_samples)
        if icfg.method == "rk4":
            y = y0.copy()
            ts, ys = [grid[0]], [y.copy()]
            for te_prev, te in zip(grid[:-1], grid[1:]):
                span = te - te_prev
                n = max(1, int(np.ceil(span / icfg.step)))
                h = span / n
                for i in range(n):
                    y = _rk4_step(rhs, te_prev + i * h, y, h)
                    if project is not None:
                        y = project(y)
                    n_steps += 1
                ts.append(te)
                ys.append(y.copy())
        else:
            ts, ys = [grid[0]], [y0.copy()]
            pending = iter(grid[1:])
            next_t = next(pending, None)

            def collect(solver):
                nonlocal n_steps, next_t
                n_steps += 1
                done = solver.status == "finished"
                dense = None
                # on the final step flush every remaining grid point;
                # roundoff can leave the last of them an ulp past solver.t
                while next_t is not None and (done or next_t <= solver.t):
                    if dense is None:
                        dense = solver.dense_output()
                    te = min(next_t, solver.t)
                    ts.append(next_t)
                    ys.append(np.asarray(dense(te), dtype=float))
                    next_t = next(pending, None)

            _drive_rk45(rhs, y0, t0, t1, icfg, project, collect)
            if next_t is not None:
                raise IntegrationError("sampling grid extends past the final step")

    times = np.asarray(ts)
    states = np.vstack(ys)
    return Trajectory(
        kind=kind,
        times=times,
        states=states,
        params_digest=digest,
        integrator=icfg,
        norm_drift=molecule_norm_error(kind, states),
        meta={"t0": t0, "t1": t1, "n_steps": n_steps},
    )


def integrate_with_variational(
    kind: str,
    params: SystemParams,
    pump: PumpConfig,
    icfg: IntegratorConfig,
    state: ReducedState,
    t0: float,
    t1: float,
    mcfg: Optional[dynamics.ModifiedFieldConfig] = None,
) -> tuple[ReducedState, np.ndarray]:
    """Flow a reduced-space state together with its tangent map.

    Integrates the pair (y, J) with dJ/dt = DF(t, y) J, J(t0) = I, using
    the analytic field Jacobian.  Only the reduced-space kinds carry a
    variational implementation; renormalization is ignored here because
    it would corrupt the tangent map's semantics.
    """
    if kind == "full":
        raise ValidationError("variational integration covers the reduced kinds only")
    if not isinstance(state, ReducedState):
        raise ValidationError("variational integration needs a ReducedState")
    dynamics._check_molecule_count(params, state.N)
    rhs = _select_rhs(kind, params, pump, mcfg)
    if kind == "modified":
        jac = dynamics.modified_jacobian(params, pump, mcfg)
    else:
        jac = dynamics.reduced_jacobian(params, pump)
    d = 2 + 3 * state.N

    def aug_rhs(t: float, z: np.ndarray) -> np.ndarray:
        y = z[:d]
        J = z[d:].reshape(d, d)
        return np.concatenate((rhs(t, y), (jac(t, y) @ J).ravel()))

    z0 = np.concatenate((state.to_vector(), np.eye(d).ravel()))
    if t1 == t0:
        return state, np.eye(d)
    if t1 < t0:
        raise ValidationError(f"t1 must not precede t0, got [{t0}, {t1}]")

    if icfg.method == "rk4":
        n = max(1, int(np.ceil((t1 - t0) / icfg.step)))
        h = (t1 - t0) / n
        z = z0
        for i in range(n):
            z = _rk4_step(aug_rhs, t0 + i * h, z, h)
    else:
        holder = {}

        def collect(solver):
            holder["z"] = solver.y

        _drive_rk45(aug_rhs, z0, t0, t1, icfg, None, collect)
        z = holder["z"]

    y_final = ReducedState.from_vector(z[:d], tol=1e-6)
    return y_final, z[d:].reshape(d, d).copy()


# ---------------------------------------------------------------------------
# two-level closed form
# ---------------------------------------------------------------------------


def rabi_reference(
    params: SystemParams, a_const: float, C0: np.ndarray, t
) -> np.ndarray:
    """Closed-form molecule evolution under a frozen coupling a.

    Solves i hbar dC/dt = H C with the Hermitian generator
    H = [[hbar omega1, i a], [-i a, hbar omega2]] by eigen-decomposition,
    so the result is unitary to machine precision.  ``t`` may be a
    scalar (returns shape (2,)) or an array (returns shape (len(t), 2)).
    """
    C0 = np.asarray(C0, dtype=complex)
    if C0.shape != (2,):
        raise ValidationError(f"C0 must have shape (2,), got {C0.shape}")
    H = np.array(
        [
            [params.hbar * params.omega1, 1j * a_const],
            [-1j * a_const, params.hbar * params.omega2],
        ],
        dtype=complex,
    )
    evals, evecs = np.linalg.eigh(H)
    coeffs = evecs.conj().T @ C0
    t_arr = np.asarray(t, dtype=float)
    phases = np.exp(-1j * np.outer(t_arr.ravel(), evals) / params.hbar)
    out = (phases * coeffs) @ evecs.T
    if t_arr.shape == ():
        return out[0]
    return out.reshape(t_arr.shape + (2,))


# ---------------------------------------------------------------------------
# trajectory serialization
# ---------------------------------------------------------------------------


def trajectory_header(kind: str, N: int) -> list[str]:
    cols = ["t", "A", "B"]
    if kind == "full":
        for n in range(1, N + 1):
            cols += [f"reC{n}1", f"imC{n}1", f"reC{n}2", f"imC{n}2"]
    else:
        for n in range(1, N + 1):
            cols += [f"u{n}", f"v{n}", f"w{n}"]
    return cols


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write samples as CSV; floats use shortest round-trip formatting."""
    header = trajectory_header(traj.kind, traj.N)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, row in zip(traj.times, traj.states):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def read_trajectory_csv(path) -> tuple[str, np.ndarray, np.ndarray]:
    """Read a trajectory CSV; returns (kind, times, states)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    if len(header) < 5 or header[:3] != ["t", "A", "B"]:
        raise ValidationError("not a trajectory CSV")
    kind = "full" if header[3].startswith("reC") else "reduced"
    data = np.asarray(rows)
    return kind, data[:, 0], data[:, 1:]
