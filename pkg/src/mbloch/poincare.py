"""Stroboscopic map, Newton shooting, and the periodic-orbit census.

The pump period T = 2 pi / Omega_p defines the stroboscopic (period)
map U(T) of the reduced system.  Fixed points of U(T) are T-periodic
orbits; Newton's method solves (DU(T) - I) delta = -(U(T)Y - Y) on the
constrained tangent space, where the Bloch components of delta live in
the tangent planes of the unit spheres.  DU(T) comes from the
variational flow with the analytic field Jacobian.

Each converged point carries its monodromy, Floquet multipliers, a
fixed-point index sign(det(I - DU(T))) computed on the constrained
tangent space, and a stability flag that ignores the per-sphere trivial
direction (the normal to the sphere is an artifact of the ambient
embedding and always carries multiplier 1).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import dynamics
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    integrate,
    integrate_with_variational,
)
from .model import PumpConfig, ReducedState, SystemParams, ValidationError

#: residual threshold below which Newton declares convergence
NEWTON_TOL = 1e-9

#: ambient distance under which two converged points are the same orbit
DEDUP_TOL = 1e-6

#: half-width of the unit-circle band treated as marginal
MARGINAL_BAND = 1e-6

#: relative determinant threshold under which the index degenerates to 0
INDEX_DEGENERACY = 1e-8

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


# ---------------------------------------------------------------------------
# stroboscopic map
# ---------------------------------------------------------------------------


def poincare_map(
    params: SystemParams,
    pump: PumpConfig,
    icfg: IntegratorConfig,
    Y: ReducedState,
    field_kind: str = "reduced",
    mcfg: Optional[dynamics.ModifiedFieldConfig] = None,
) -> ReducedState:
    """Apply the period map: flow Y over one pump period from phase 0."""
    traj = integrate(field_kind, params, pump, icfg, Y, 0.0, pump.period, mcfg=mcfg)
    return traj.final_state


# ---------------------------------------------------------------------------
# confinement radius and default compactification geometry
# ---------------------------------------------------------------------------


def bounding_radius(
    params: SystemParams,
    cfg: dynamics.ModifiedFieldConfig,
    margin: float = 0.1,
) -> float:
    """Radius outside which the cavity energy strictly decreases.

    sqrt(D / (a1 gamma)) marks where the decay estimate forces
    dV/dt < 0; the returned radius adds a multiplicative margin.
    """
    return _radius_from_eps(params, cfg.epsilon_lyap, margin)


def _radius_from_eps(params: SystemParams, eps: float, margin: float) -> float:
    gamma, D = dynamics.decay_pair(params, eps)
    a1, _ = dynamics.lyapunov_form_bounds(params, eps)
    return float((1.0 + margin) * np.sqrt(D / (a1 * gamma)))


def default_modified_config(
    params: SystemParams,
    eps: Optional[float] = None,
    margin: float = 0.1,
) -> dynamics.ModifiedFieldConfig:
    """Compactification geometry derived from the decay estimate.

    R is the bounding radius (floored at 1 so the config stays valid in
    the uncoupled limit where the radius vanishes) and R_c = R + 1.
    """
    eps = dynamics.default_epsilon(params) if eps is None else eps
    R = max(1.0, _radius_from_eps(params, eps, margin))
    return dynamics.ModifiedFieldConfig(R=R, R_c=R + 1.0, epsilon_lyap=eps)


# ---------------------------------------------------------------------------
# seed grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedGrid:
    """Product grid of cavity points and per-molecule sphere points.

    The seed count is maxwell_count * sphere_count ** N.
    """

    maxwell_count: int
    sphere_count: int
    R_bound: float
    N: int = 1

    def __post_init__(self) -> None:
        if self.maxwell_count < 1:
            raise ValidationError("maxwell_count must be at least 1")
        if self.sphere_count < 1:
            raise ValidationError("sphere_count must be at least 1")
        if not np.isfinite(self.R_bound) or self.R_bound < 0.0:
            raise ValidationError(f"R_bound must be nonnegative, got {self.R_bound}")
        if self.N < 1:
            raise ValidationError("N must be at least 1")

    @property
    def size(self) -> int:
        return self.maxwell_count * self.sphere_count**self.N


def _disk_points(count: int, radius: float) -> np.ndarray:
    """Golden-angle spiral in the closed disk; the first point is the origin."""
    pts = np.zeros((count, 2))
    if count > 1:
        k = np.arange(1, count)
        r = radius * np.sqrt(k / (count - 1))
        th = k * GOLDEN_ANGLE
        pts[1:, 0] = r * np.cos(th)
        pts[1:, 1] = r * np.sin(th)
    return pts


def _sphere_points(count: int) -> np.ndarray:
    """Quasi-uniform sphere points: both poles first, then a spiral belt."""
    if count == 1:
        return np.array([[0.0, 0.0, 1.0]])
    pts = np.zeros((count, 3))
    pts[0] = (0.0, 0.0, 1.0)
    pts[1] = (0.0, 0.0, -1.0)
    m = count - 2
    if m > 0:
        k = np.arange(m)
        w = 1.0 - 2.0 * (k + 1.0) / (m + 1.0)
        rho = np.sqrt(np.maximum(0.0, 1.0 - w**2))
        th = k * GOLDEN_ANGLE
        pts[2:, 0] = rho * np.cos(th)
        pts[2:, 1] = rho * np.sin(th)
        pts[2:, 2] = w
    return pts


def grid_seeds(grid: SeedGrid) -> list[ReducedState]:
    """Deterministic seed list: cavity points outer, sphere tuples inner."""
    maxwell = _disk_points(grid.maxwell_count, grid.R_bound)
    sphere = _sphere_points(grid.sphere_count)
    seeds: list[ReducedState] = []
    for M in maxwell:
        for combo in np.ndindex(*([grid.sphere_count] * grid.N)):
            s = sphere[list(combo)]
            seeds.append(ReducedState(A=M[0], B=M[1], s=s))
    return seeds


# ---------------------------------------------------------------------------
# constrained tangent geometry
# ---------------------------------------------------------------------------


def tangent_basis(Y: ReducedState) -> np.ndarray:
    """Orthonormal basis of the constrained tangent space at Y.

    Columns: the two cavity directions, then two tangent vectors per
    Bloch sphere.  Shape (2 + 3N, 2 + 2N).
    """
    N = Y.N
    d = 2 + 3 * N
    P = np.zeros((d, 2 + 2 * N))
    P[0, 0] = 1.0
    P[1, 1] = 1.0
    for n in range(N):
        s = Y.s[n] / np.linalg.norm(Y.s[n])
        axis = int(np.argmin(np.abs(s)))
        e = np.zeros(3)
        e[axis] = 1.0
        t1 = e - np.dot(e, s) * s
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(s, t1)
        base = 2 + 3 * n
        P[base : base + 3, 2 + 2 * n] = t1
        P[base : base + 3, 2 + 2 * n + 1] = t2
    return P


def _retract(Y: ReducedState, delta: np.ndarray) -> ReducedState:
    """Apply an ambient update and renormalize each Bloch vector."""
    vec = Y.to_vector() + delta
    s = vec[2:].reshape(-1, 3)
    norms = np.linalg.norm(s, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("update collapsed a Bloch vector to zero")
    s /= norms
    return ReducedState(A=vec[0], B=vec[1], s=s)


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    """Outcome of a Newton solve for a period-map fixed point.

    ``monodromy`` is the ambient tangent map DU(T) at Y_sharp (shape
    (2+3N, 2+3N)) and ``floquet`` its eigenvalues, which include one
    trivial multiplier 1 per molecule from the sphere-normal direction.
    ``index`` is sign(det(I - DU(T))) on the constrained tangent space,
    0 when the determinant is degenerate.  ``stable`` ignores
    multipliers within MARGINAL_BAND of the unit circle; such points
    are flagged ``marginal`` instead.
    """

    converged: bool
    Y_sharp: ReducedState
    residual: float
    newton_iterations: int
    monodromy: Optional[np.ndarray] = None
    floquet: Optional[np.ndarray] = None
    index: int = 0
    stable: bool = False
    marginal: bool = False
    degenerate: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        d = {
            "converged": self.converged,
            "Y_sharp": [repr(float(x)) for x in self.Y_sharp.to_vector()],
            "residual": repr(float(self.residual)),
            "newton_iterations": self.newton_iterations,
            "index": self.index,
            "stable": self.stable,
            "marginal": self.marginal,
            "degenerate": self.degenerate,
        }
        if self.floquet is not None:
            d["floquet"] = [
                [repr(float(m.real)), repr(float(m.imag))] for m in self.floquet
            ]
        if self.message:
            d["message"] = self.message
        return d


def _constrained_block(Y: ReducedState, J: np.ndarray) -> np.ndarray:
    P = tangent_basis(Y)
    return P.T @ J @ P


def _classify(Y: ReducedState, J: np.ndarray) -> tuple[np.ndarray, int, bool, bool]:
    """Floquet set, index, and stability flags from the monodromy at Y."""
    Jc = _constrained_block(Y, J)
    dc = Jc.shape[0]
    floquet = np.linalg.eigvals(J)
    order = np.lexsort((np.angle(floquet), -np.abs(floquet)))
    floquet = floquet[order]
    IJ = np.eye(dc) - Jc
    det = float(np.linalg.det(IJ))
    scale = float(np.linalg.norm(IJ, 2)) ** dc
    if scale == 0.0 or abs(det) < INDEX_DEGENERACY * scale:
        index = 0
    else:
        index = 1 if det > 0.0 else -1
    mu = np.abs(np.linalg.eigvals(Jc))
    if np.any(mu > 1.0 + MARGINAL_BAND):
        stable, marginal = False, False
    elif np.any(mu >= 1.0 - MARGINAL_BAND):
        stable, marginal = False, True
    else:
        stable, marginal = True, False
    return floquet, index, stable, marginal


def newton_fixed_point(
    params: SystemParams,
    pump: PumpConfig,
    icfg: IntegratorConfig,
    seed: ReducedState,
    tol: float = NEWTON_TOL,
    max_iter: int = 30,
    field_kind: str = "reduced",
    mcfg: Optional[dynamics.ModifiedFieldConfig] = None,
) -> FixedPointResult:
    """Newton shooting for a fixed point of the period map.

    Damped updates: the step is halved (up to 8 times) until the
    residual decreases; a step that cannot decrease it ends the solve.
    A singular constrained (DU(T) - I) is reported as a degenerate
    candidate with index 0.
    """
    if params.sigma <= 0.0:
        raise ValidationError("periodic-orbit search requires sigma > 0")
    T = pump.period

    def residual_of(Y: ReducedState) -> float:
        Z = poincare_map(params, pump, icfg, Y, field_kind, mcfg)
        return float(np.linalg.norm(Z.to_vector() - Y.to_vector()))

    Y = seed
    iterations = 0
    message = ""
    for _ in range(max_iter):
        YT, J = integrate_with_variational(
            field_kind, params, pump, icfg, Y, 0.0, T, mcfg=mcfg
        )
        r = YT.to_vector() - Y.to_vector()
        res = float(np.linalg.norm(r))
        if res <= tol:
            floquet, index, stable, marginal = _classify(Y, J)
            return FixedPointResult(
                converged=True,
                Y_sharp=Y,
                residual=res,
                newton_iterations=iterations,
                monodromy=J,
                floquet=floquet,
                index=index,
                stable=stable,
                marginal=marginal,
            )
        P = tangent_basis(Y)
        Jc = P.T @ (J - np.eye(J.shape[0])) @ P
        rc = P.T @ r
        try:
            delta_c = np.linalg.solve(Jc, -rc)
        except np.linalg.LinAlgError:
            return FixedPointResult(
                converged=False,
                Y_sharp=Y,
                residual=res,
                newton_iterations=iterations,
                monodromy=J,
                degenerate=True,
                index=0,
                message="singular constrained (DU(T) - I)",
            )
        if not np.all(np.isfinite(delta_c)):
            return FixedPointResult(
                converged=False,
                Y_sharp=Y,
                residual=res,
                newton_iterations=iterations,
                monodromy=J,
                degenerate=True,
                index=0,
                message="non-finite Newton step",
            )
        delta = P @ delta_c
        improved = None
        for k in range(9):
            try:
                Y_try = _retract(Y, (0.5**k) * delta)
                res_try = residual_of(Y_try)
            except (ValidationError, IntegrationError):
                continue
            if res_try < res:
                improved = Y_try
                break
        iterations += 1
        if improved is None:
            message = "line search stalled"
            break
        Y = improved
    else:
        message = f"no convergence in {max_iter} iterations"

    res = residual_of(Y)
    return FixedPointResult(
        converged=False,
        Y_sharp=Y,
        residual=res,
        newton_iterations=iterations,
        message=message,
    )


def lefschetz_index(result: FixedPointResult) -> int:
    """Fixed-point index from a solve result's monodromy."""
    if result.monodromy is None:
        raise ValidationError("result carries no monodromy matrix")
    _, index, _, _ = _classify(result.Y_sharp, result.monodromy)
    return index


# ---------------------------------------------------------------------------
# census over a seed grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CensusResult:
    """Deduplicated fixed points found from a seed sweep."""

    points: list
    index_sum: int
    n_seeds: int
    n_converged: int
    warning: str = ""

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "index_sum": self.index_sum,
            "n_seeds": self.n_seeds,
            "n_converged": self.n_converged,
            "warning": self.warning,
        }


def _solve_seed(payload) -> FixedPointResult:
    params, pump, icfg, seed_vec, tol, max_iter, field_kind, mcfg = payload
    seed = ReducedState.from_vector(seed_vec)
    return newton_fixed_point(
        params, pump, icfg, seed, tol, max_iter, field_kind, mcfg
    )


def find_all_periodic(
    params: SystemParams,
    pump: PumpConfig,
    icfg: IntegratorConfig,
    grid: Union[SeedGrid, Sequence[ReducedState]],
    tol: float = NEWTON_TOL,
    max_iter: int = 30,
    field_kind: str = "reduced",
    mcfg: Optional[dynamics.ModifiedFieldConfig] = None,
    workers: int = 1,
    dedup_tol: float = DEDUP_TOL,
) -> CensusResult:
    """Newton from every seed, deduplicated by ambient distance.

    The census lists the orbits the sweep found; it carries no claim of
    completeness.  Results are deterministic and independent of the
    worker count: solves are collected in seed order and merged
    sequentially (representative = lowest residual, ties broken by
    state lexicographic order).
    """
    if params.sigma <= 0.0:
        raise ValidationError("periodic-orbit search requires sigma > 0")
    seeds = grid_seeds(grid) if isinstance(grid, SeedGrid) else list(grid)
    payloads = [
        (params, pump, icfg, s.to_vector(), tol, max_iter, field_kind, mcfg)
        for s in seeds
    ]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_seed, payloads))
    else:
        results = [_solve_seed(p) for p in payloads]

    converged = [r for r in results if r.converged]
    # order for clustering: residual, then state order, so dedup does not
    # depend on the seed permutation
    def sort_key(r: FixedPointResult):
        return (r.residual, tuple(np.round(r.Y_sharp.to_vector(), 12)))

    reps: list[FixedPointResult] = []
    for r in sorted(converged, key=sort_key):
        vec = r.Y_sharp.to_vector()
        if any(
            np.linalg.norm(vec - rep.Y_sharp.to_vector()) < dedup_tol
            for rep in reps
        ):
            continue
        reps.append(r)

    index_sum = int(sum(r.index for r in reps))
    warning = ""
    if not reps:
        warning = (
            "no fixed point converged from this grid; widen the seed grid "
            "or loosen the tolerance before concluding anything"
        )
    return CensusResult(
        points=reps,
        index_sum=index_sum,
        n_seeds=len(seeds),
        n_converged=len(converged),
        warning=warning,
    )


# ---------------------------------------------------------------------------
# continuation in pump amplitude
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Branch:
    """Solution branch from natural-parameter continuation."""

    amplitudes: list
    points: list
    stability_changes: list
    completed: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "amplitudes": [repr(float(a)) for a in self.amplitudes],
            "points": [p.to_dict() for p in self.points],
            "stability_changes": self.stability_changes,
            "completed": self.completed,
            "message": self.message,
        }


def _n_unstable(result: FixedPointResult) -> int:
    Jc = _constrained_block(result.Y_sharp, result.monodromy)
    mu = np.abs(np.linalg.eigvals(Jc))
    return int(np.sum(mu > 1.0 + MARGINAL_BAND))


def continuation(
    params: SystemParams,
    pump: PumpConfig,
    icfg: IntegratorConfig,
    start: Union[ReducedState, FixedPointResult],
    amplitudes: Sequence[float],
    tol: float = NEWTON_TOL,
    max_iter: int = 30,
    field_kind: str = "reduced",
    mcfg: Optional[dynamics.ModifiedFieldConfig] = None,
    min_step_fraction: float = 1e-4,
) -> Branch:
    """Walk the pump amplitude schedule, reseeding Newton at each step.

    ``pump`` is the unit-amplitude profile; the pump at amplitude a is
    ``pump.scaled(a)``.  A failed step is retried with the amplitude
    increment halved until it drops below min_step_fraction of the
    schedule range, at which point the branch terminates early.  Steps
    where the count of multipliers outside the unit circle changes are
    recorded as stability changes.
    """
    if len(amplitudes) == 0:
        raise ValidationError("amplitude schedule must be nonempty")
    amp_list = [float(a) for a in amplitudes]
    rng = max(amp_list) - min(amp_list)
    min_step = min_step_fraction * rng if rng > 0.0 else 0.0

    seed = start.Y_sharp if isinstance(start, FixedPointResult) else start
    first = newton_fixed_point(
        params, pump.scaled(amp_list[0]), icfg, seed, tol, max_iter, field_kind, mcfg
    )
    if not first.converged:
        return Branch(
            amplitudes=[],
            points=[],
            stability_changes=[],
            completed=False,
            message=f"no convergence at starting amplitude {amp_list[0]}",
        )
    amps = [amp_list[0]]
    points = [first]
    changes: list[dict] = []

    for target in amp_list[1:]:
        while amps[-1] != target:
            current = amps[-1]
            remaining = target - current
            frac = 1.0
            ok = None
            while True:
                # the full remaining step lands on the target exactly
                trial = target if frac == 1.0 else current + frac * remaining
                res = newton_fixed_point(
                    params,
                    pump.scaled(trial),
                    icfg,
                    points[-1].Y_sharp,
                    tol,
                    max_iter,
                    field_kind,
                    mcfg,
                )
                if res.converged:
                    ok = (trial, res)
                    break
                frac *= 0.5
                if abs(frac * remaining) < min_step or frac * remaining == 0.0:
                    break
            if ok is None:
                return Branch(
                    amplitudes=amps,
                    points=points,
                    stability_changes=changes,
                    completed=False,
                    message=(
                        f"step collapsed below {min_step:.3g} near amplitude"
                        f" {amps[-1]:.6g}"
                    ),
                )
            trial, res = ok
            prev_unstable = _n_unstable(points[-1])
            new_unstable = _n_unstable(res)
            if new_unstable != prev_unstable:
                changes.append(
                    {
                        "from_amplitude": amps[-1],
                        "to_amplitude": trial,
                        "unstable_before": prev_unstable,
                        "unstable_after": new_unstable,
                    }
                )
            amps.append(trial)
            points.append(res)

    return Branch(
        amplitudes=amps,
        points=points,
        stability_changes=changes,
        completed=True,
    )
