"""Vector fields, energy function, and Lyapunov machinery.

The full system couples a damped harmonic cavity mode to N two-level
molecules through the time-dependent coupling ``a(t)``:

    dA/dt = B
    dB/dt = -Omega^2 A - sigma B + c j
    i hbar dC_n1/dt =  hbar omega1 C_n1 + i a C_n2
    i hbar dC_n2/dt =  hbar omega2 C_n2 - i a C_n1

with ``a = (q/c) (A + pump(t))`` and the molecular current
``j = sum_n kappa_n Im(conj(C_n1) C_n2)``.  On the Bloch quotient the
molecule block becomes

    du/dt = omega v + (2a/hbar) w
    dv/dt = -omega u
    dw/dt = -(2a/hbar) u

and the current reads ``j = sum_n (kappa_n / 2) v_n``.

The module also carries the quadratic Lyapunov function
``V = E + eps A B`` of the cavity block, the decay pair (gamma, D) with
``dV/dt <= -gamma V + D``, and a compactified variant of the reduced
field that is radial far from the origin (used to confine periodic-orbit
searches to a bounded region).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import (
    FullState,
    PumpConfig,
    ReducedState,
    SystemParams,
    ValidationError,
)

State = Union[FullState, ReducedState]


# ---------------------------------------------------------------------------
# pump, coupling, current
# ---------------------------------------------------------------------------


def pump_value(pump: PumpConfig, t):
    """Evaluate the pump Fourier series at time t (scalar or array)."""
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, pump.offset)
    K = max(len(pump.cosine), len(pump.sine))
    cos = pump.cosine + (0.0,) * (K - len(pump.cosine))
    sin = pump.sine + (0.0,) * (K - len(pump.sine))
    for k in range(1, K + 1):
        phase = k * pump.Omega_p * t
        out = out + cos[k - 1] * np.cos(phase) + sin[k - 1] * np.sin(phase)
    return out if out.shape else float(out)


def coupling_a(params: SystemParams, pump: PumpConfig, A: float, t: float) -> float:
    """Field-molecule coupling a = (q/c) (A + pump(t))."""
    return (params.q / params.c) * (A + pump_value(pump, t))


def current(params: SystemParams, state: State) -> float:
    """Molecular current driving the cavity mode.

    Accepts either description of the molecules; the two formulas agree
    because v_n = 2 Im(conj(C_n1) C_n2).
    """
    kappa = params.kappa_array
    if isinstance(state, FullState):
        _check_molecule_count(params, state.N)
        return float(
            np.sum(kappa * np.imag(np.conj(state.C[:, 0]) * state.C[:, 1]))
        )
    if isinstance(state, ReducedState):
        _check_molecule_count(params, state.N)
        return float(np.sum(0.5 * kappa * state.s[:, 1]))
    raise TypeError(f"unsupported state type {type(state).__name__}")


def _check_molecule_count(params: SystemParams, n: int) -> None:
    if n != params.N:
        raise ValidationError(
            f"state has {n} molecules but params expect N={params.N}"
        )


# ---------------------------------------------------------------------------
# vector fields (state-level API)
# ---------------------------------------------------------------------------


def field_full(params: SystemParams, pump: PumpConfig, t: float, x: FullState):
    """Time derivative of the full system at (t, x).

    Returns ``(dA, dB, dC)`` with ``dC`` complex of shape (N, 2).  The
    derivative is tangent to the unit-charge spheres: the real part of
    ``conj(C_n1) dC_n1 + conj(C_n2) dC_n2`` vanishes identically.
    """
    _check_molecule_count(params, x.N)
    vec = full_rhs(params, pump)(t, x.to_vector())
    N = x.N
    dC = (vec[2::2] + 1j * vec[3::2]).reshape(N, 2)
    return float(vec[0]), float(vec[1]), dC


def field_reduced(params: SystemParams, pump: PumpConfig, t: float, y: ReducedState):
    """Time derivative of the Bloch-reduced system at (t, y).

    Returns ``(dA, dB, ds)`` with ``ds`` of shape (N, 3), tangent to the
    unit spheres (``s_n . ds_n = 0``).
    """
    _check_molecule_count(params, y.N)
    vec = reduced_rhs(params, pump)(t, y.to_vector())
    return float(vec[0]), float(vec[1]), vec[2:].reshape(y.N, 3)


def field_modified(
    params: SystemParams,
    pump: PumpConfig,
    cfg: "ModifiedFieldConfig",
    t: float,
    y: ReducedState,
):
    """Compactified reduced field; see :func:`modified_rhs`."""
    _check_molecule_count(params, y.N)
    vec = modified_rhs(params, pump, cfg)(t, y.to_vector())
    return float(vec[0]), float(vec[1]), vec[2:].reshape(y.N, 3)


# ---------------------------------------------------------------------------
# vector fields (flat ndarray API consumed by the integrators)
# ---------------------------------------------------------------------------


def full_rhs(params: SystemParams, pump: PumpConfig):
    """Right-hand side on flat vectors [A, B, re/im C interleaved]."""
    Om2 = params.Omega**2
    sigma = params.sigma
    c = params.c
    q_over_c = params.q / c
    inv_h = 1.0 / params.hbar
    w1 = params.omega1
    w2 = params.omega2
    kappa = params.kappa_array

    def rhs(t: float, yv: np.ndarray) -> np.ndarray:
        A = yv[0]
        B = yv[1]
        C = (yv[2::2] + 1j * yv[3::2]).reshape(-1, 2)
        a = q_over_c * (A + pump_value(pump, t))
        j = float(np.sum(kappa * np.imag(np.conj(C[:, 0]) * C[:, 1])))
        dC = np.empty_like(C)
        dC[:, 0] = -1j * w1 * C[:, 0] + (a * inv_h) * C[:, 1]
        dC[:, 1] = -1j * w2 * C[:, 1] - (a * inv_h) * C[:, 0]
        out = np.empty_like(yv)
        out[0] = B
        out[1] = -Om2 * A - sigma * B + c * j
        out[2::2] = dC.real.ravel()
        out[3::2] = dC.imag.ravel()
        return out

    return rhs


def reduced_rhs(params: SystemParams, pump: PumpConfig):
    """Right-hand side on flat vectors [A, B, u1, v1, w1, ...]."""
    Om2 = params.Omega**2
    sigma = params.sigma
    c = params.c
    q_over_c = params.q / c
    two_over_h = 2.0 / params.hbar
    omega = params.omega
    half_kappa = 0.5 * params.kappa_array

    def rhs(t: float, yv: np.ndarray) -> np.ndarray:
        A = yv[0]
        B = yv[1]
        s = yv[2:].reshape(-1, 3)
        a = q_over_c * (A + pump_value(pump, t))
        alpha = two_over_h * a
        j = float(np.sum(half_kappa * s[:, 1]))
        ds = np.empty_like(s)
        ds[:, 0] = omega * s[:, 1] + alpha * s[:, 2]
        ds[:, 1] = -omega * s[:, 0]
        ds[:, 2] = -alpha * s[:, 0]
        out = np.empty_like(yv)
        out[0] = B
        out[1] = -Om2 * A - sigma * B + c * j
        out[2:] = ds.ravel()
        return out

    return rhs


def reduced_jacobian(params: SystemParams, pump: PumpConfig):
    """State Jacobian of :func:`reduced_rhs` (the field is polynomial)."""
    Om2 = params.Omega**2
    sigma = params.sigma
    c = params.c
    q_over_c = params.q / c
    two_over_h = 2.0 / params.hbar
    omega = params.omega
    half_kappa = 0.5 * params.kappa_array
    dalpha_dA = two_over_h * q_over_c

    def jac(t: float, yv: np.ndarray) -> np.ndarray:
        A = yv[0]
        s = yv[2:].reshape(-1, 3)
        N = s.shape[0]
        a = q_over_c * (A + pump_value(pump, t))
        alpha = two_over_h * a
        d = 2 + 3 * N
        J = np.zeros((d, d))
        J[0, 1] = 1.0
        J[1, 0] = -Om2
        J[1, 1] = -sigma
        for n in range(N):
            b = 2 + 3 * n
            J[1, b + 1] = c * half_kappa[n]
            J[b, 0] = dalpha_dA * s[n, 2]
            J[b, b + 1] = omega
            J[b, b + 2] = alpha
            J[b + 1, b] = -omega
            J[b + 2, 0] = -dalpha_dA * s[n, 0]
            J[b + 2, b] = -alpha
        return J

    return jac


# ---------------------------------------------------------------------------
# energy function
# ---------------------------------------------------------------------------


def hamiltonian(params: SystemParams, pump: PumpConfig, t: float, x: FullState) -> float:
    """Energy function whose gradient flow (with cavity friction) is the
    full field:

        (1/c^2) dA/dt = dH/dB
        (1/c^2) dB/dt = -dH/dA - (sigma/c^2) B
        i hbar dC_nl/dt = dH/d(conj C_nl)

    The molecule coupling enters with weight kappa_n / 2 per molecule,
    so the identity with :func:`field_full` (which uses the common
    coupling a = (q/c)(A + pump)) is exact when kappa_n = 2 q, the
    default weight.
    """
    _check_molecule_count(params, x.N)
    c = params.c
    E_cav = (x.B**2 + (params.Omega * x.A) ** 2) / (2.0 * c**2)
    occ = np.abs(x.C) ** 2
    E_mol = float(np.sum(params.hbar * (params.omega1 * occ[:, 0] + params.omega2 * occ[:, 1])))
    drive = (x.A + pump_value(pump, t)) / c
    kappa = params.kappa_array
    E_int = -drive * float(
        np.sum(kappa * np.imag(np.conj(x.C[:, 0]) * x.C[:, 1]))
    )
    return float(E_cav + E_mol + E_int)


# ---------------------------------------------------------------------------
# Lyapunov function of the cavity block
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModifiedFieldConfig:
    """Geometry of the compactified field and the Lyapunov tilt.

    ``R`` is the radius below which the dynamics is untouched, ``R_c``
    the radius beyond which the cavity part is exactly radial, and
    ``epsilon_lyap`` the cross-term weight of the Lyapunov function.
    """

    R: float
    R_c: float
    epsilon_lyap: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.R) or self.R <= 0.0:
            raise ValidationError(f"R must be positive, got {self.R}")
        if not np.isfinite(self.R_c) or self.R_c < self.R + 1.0:
            raise ValidationError(
                f"R_c must be at least R + 1, got R={self.R} R_c={self.R_c}"
            )
        if not np.isfinite(self.epsilon_lyap) or self.epsilon_lyap <= 0.0:
            raise ValidationError(
                f"epsilon_lyap must be positive, got {self.epsilon_lyap}"
            )


def epsilon_bound(params: SystemParams) -> float:
    """Largest admissible Lyapunov tilt for these parameters."""
    sigma = params.sigma
    Om2 = params.Omega**2
    return min(sigma / 2.0, sigma / (2.0 + sigma), Om2, 1.0)


def check_epsilon(params: SystemParams, eps: float) -> float:
    """Validate the tilt eps against the admissibility window."""
    if not np.isfinite(eps) or eps <= 0.0:
        raise ValidationError(f"epsilon_lyap must be positive, got {eps}")
    bound = epsilon_bound(params)
    if eps >= bound:
        raise ValidationError(
            f"epsilon_lyap={eps} out of range: requires eps < {bound:.6g}"
            f" for sigma={params.sigma}, Omega={params.Omega}"
        )
    return eps


def default_epsilon(params: SystemParams) -> float:
    """Default Lyapunov tilt.

    Base value min(sigma/4, sigma^2/(2 sigma + 4), Omega^2/4), capped by
    sigma/(2(2+sigma)) and Omega^2/(2 sigma) so that the admissibility
    window and the survival of both negative quadratic terms in the
    decay estimate hold for every parameter set.  In the weakly damped
    regime (sigma < 2, Omega of order 1) the caps are not binding.
    """
    sigma = params.sigma
    if sigma == 0.0:
        raise ValidationError("Lyapunov decay requires sigma > 0")
    Om2 = params.Omega**2
    return min(
        sigma / 4.0,
        sigma**2 / (2.0 * sigma + 4.0),
        Om2 / 4.0,
        sigma / (2.0 * (2.0 + sigma)),
        Om2 / (2.0 * sigma),
    )


def lyapunov_form_bounds(params: SystemParams, eps: float) -> tuple[float, float]:
    """Quadratic-form bounds a1 |M|^2 <= V <= a2 |M|^2, with a1 > 0."""
    check_epsilon(params, eps)
    Om2 = params.Omega**2
    a1 = 0.5 * min(Om2, 1.0) - eps / 2.0
    a2 = 0.5 * max(Om2, 1.0) + eps / 2.0
    return a1, a2


def lyapunov_V(params: SystemParams, cfg: ModifiedFieldConfig, A, B):
    """Tilted cavity energy V = (Omega^2 A^2 + B^2)/2 + eps A B."""
    eps = check_epsilon(params, cfg.epsilon_lyap)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    V = 0.5 * (params.Omega**2 * A**2 + B**2) + eps * A * B
    return V if V.shape else float(V)


def lyapunov_gradient(params: SystemParams, eps: float, A: float, B: float):
    """Gradient of V with respect to (A, B)."""
    return params.Omega**2 * A + eps * B, B + eps * A


def lyapunov_decay_coeffs(
    params: SystemParams, cfg: ModifiedFieldConfig
) -> tuple[float, float]:
    """Decay pair (gamma, D) with dV/dt <= -gamma V + D along any
    trajectory with unit Bloch vectors.

    Along the flow,

        dV/dt = -(sigma - eps) B^2 - eps Omega^2 A^2 - eps sigma A B
                + c j (eps A + B).

    Bounding the cross term with Young's inequality leaves the negative
    quadratic -(sigma/2 - eps) B^2 - (eps Omega^2 - sigma eps^2/2) A^2;
    absorbing the current term c j_max (eps |A| + |B|) into half of each
    coefficient leaves -(beta_B/2) B^2 - (beta_A/2) A^2 + D, and
    gamma = min(beta_A, beta_B) / (2 a2) converts |M|^2 to V.
    """
    return decay_pair(params, cfg.epsilon_lyap)


def decay_pair(params: SystemParams, eps: float) -> tuple[float, float]:
    """(gamma, D) for a bare tilt value; see :func:`lyapunov_decay_coeffs`."""
    eps = check_epsilon(params, eps)
    sigma = params.sigma
    if sigma <= 0.0:
        raise ValidationError("Lyapunov decay requires sigma > 0")
    Om2 = params.Omega**2
    beta_B = sigma / 2.0 - eps
    beta_A = eps * Om2 - sigma * eps**2 / 2.0
    if beta_B <= 0.0 or beta_A <= 0.0:
        raise ValidationError(
            f"epsilon_lyap={eps} leaves no negative quadratic term"
            f" (beta_A={beta_A:.3g}, beta_B={beta_B:.3g})"
        )
    _, a2 = lyapunov_form_bounds(params, eps)
    drive = params.c * params.current_bound
    D = drive**2 / (2.0 * beta_B) + (drive * eps) ** 2 / (2.0 * beta_A)
    gamma = min(beta_A, beta_B) / (2.0 * a2)
    return float(gamma), float(D)


# ---------------------------------------------------------------------------
# smooth cutoff and compactified field
# ---------------------------------------------------------------------------


def _bump(x):
    """exp(-1/x) for x > 0, zero otherwise; smooth on the real line."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0.0, x, 1.0)
    return np.where(x > 0.0, np.exp(-1.0 / safe), 0.0)


def _bump_prime(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0.0, x, 1.0)
    return np.where(x > 0.0, np.exp(-1.0 / safe) / safe**2, 0.0)


def zeta(r, R: float):
    """Smooth cutoff: 1 for r <= R, 0 for r >= R + 1, monotone between.

    Built from the standard smooth partition
    f(R + 1 - r) / (f(R + 1 - r) + f(r - R)) with f(x) = exp(-1/x).
    The plateau values are exact (0.0 and 1.0), not merely close.
    """
    r = np.asarray(r, dtype=float)
    f_hi = _bump(R + 1.0 - r)
    f_lo = _bump(r - R)
    denom = f_hi + f_lo
    # denominator is bounded away from 0 on the transition band and the
    # plateaus resolve to exactly 1 and 0
    out = np.where(denom > 0.0, f_hi / np.where(denom > 0.0, denom, 1.0), 0.0)
    out = np.where(r <= R, 1.0, out)
    out = np.where(r >= R + 1.0, 0.0, out)
    return out if out.shape else float(out)


def zeta_prime(r, R: float):
    """Derivative of :func:`zeta`; identically zero on both plateaus."""
    r = np.asarray(r, dtype=float)
    f_hi = _bump(R + 1.0 - r)
    f_lo = _bump(r - R)
    g_hi = _bump_prime(R + 1.0 - r)
    g_lo = _bump_prime(r - R)
    denom = (f_hi + f_lo) ** 2
    num = -(g_hi * f_lo + f_hi * g_lo)
    out = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)
    out = np.where((r <= R) | (r >= R + 1.0), 0.0, out)
    return out if out.shape else float(out)


def modified_rhs(params: SystemParams, pump: PumpConfig, cfg: ModifiedFieldConfig):
    """Compactified reduced field on flat vectors.

    Inside radius min(R, R_c - 1) this evaluates :func:`reduced_rhs`
    through the identical code path, so the two fields agree bit for
    bit there.  Beyond R_c the cavity part is exactly -M/|M|^2 and the
    Bloch part is frozen; in between the parts blend smoothly, with the
    Bloch part cut by zeta(|M|, R) and the cavity part by
    zeta(|M|, R_c - 1).
    """
    base = reduced_rhs(params, pump)
    plateau = min(cfg.R, cfg.R_c - 1.0)
    R_bloch = cfg.R
    R_cav = cfg.R_c - 1.0

    def rhs(t: float, yv: np.ndarray) -> np.ndarray:
        rho = float(np.hypot(yv[0], yv[1]))
        if rho <= plateau:
            return base(t, yv)
        raw = base(t, yv)
        z_cav = zeta(rho, R_cav)
        z_bloch = zeta(rho, R_bloch)
        out = np.empty_like(raw)
        rho2 = rho * rho
        out[0] = z_cav * raw[0] + (1.0 - z_cav) * (-yv[0] / rho2)
        out[1] = z_cav * raw[1] + (1.0 - z_cav) * (-yv[1] / rho2)
        out[2:] = z_bloch * raw[2:]
        return out

    return rhs


def modified_jacobian(params: SystemParams, pump: PumpConfig, cfg: ModifiedFieldConfig):
    """State Jacobian of :func:`modified_rhs`, including cutoff terms."""
    base_rhs = reduced_rhs(params, pump)
    base_jac = reduced_jacobian(params, pump)
    plateau = min(cfg.R, cfg.R_c - 1.0)
    R_bloch = cfg.R
    R_cav = cfg.R_c - 1.0

    def jac(t: float, yv: np.ndarray) -> np.ndarray:
        rho = float(np.hypot(yv[0], yv[1]))
        if rho <= plateau:
            return base_jac(t, yv)
        raw = base_rhs(t, yv)
        J = base_jac(t, yv)
        M = yv[:2]
        rho2 = rho * rho
        grad_rho = M / rho  # d rho / d (A, B)
        z_cav = zeta(rho, R_cav)
        z_bloch = zeta(rho, R_bloch)
        zp_cav = zeta_prime(rho, R_cav)
        zp_bloch = zeta_prime(rho, R_bloch)
        tail = -M / rho2
        # d tail / d M = -(I rho^2 - 2 M M^T) / rho^4
        d_tail = -(np.eye(2) / rho2 - 2.0 * np.outer(M, M) / rho2**2)
        out = np.zeros_like(J)
        # cavity rows
        out[:2, :2] = (
            z_cav * J[:2, :2]
            + np.outer(raw[:2] - tail, zp_cav * grad_rho)
            + (1.0 - z_cav) * d_tail
        )
        out[:2, 2:] = z_cav * J[:2, 2:]
        # Bloch rows
        out[2:, :2] = z_bloch * J[2:, :2] + np.outer(raw[2:], zp_bloch * grad_rho)
        out[2:, 2:] = z_bloch * J[2:, 2:]
        return out

    return jac
