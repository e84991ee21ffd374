"""Core types for the driven cavity / two-level molecule model.

State conventions
-----------------
The cavity mode carries two real coordinates: the field amplitude ``A``
and its velocity ``B = dA/dt``.  Each molecule ``n`` carries a
normalized pair of complex amplitudes ``(C_n1, C_n2)`` for the lower and
upper level.  Per-molecule norm is conserved by the flow, so the full
phase space is ``R^2 x (S^3)^N``.

Multiplying a molecule's amplitude pair by a phase ``exp(i theta_n)``
leaves every physical observable (cavity trace, current, population
inversion) unchanged.  Quotienting by those phases maps each ``S^3``
factor to the unit Bloch sphere via

    u = 2 Re(conj(C1) C2),  v = 2 Im(conj(C1) C2),  w = |C2|^2 - |C1|^2.

``hopf_project`` implements the quotient map and ``hopf_section`` picks
the canonical representative with ``C1`` real and nonnegative.

All types here are immutable plain data; operations return new values.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

#: default tolerance for the unit-norm invariants of state types
NORM_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when a parameter set or state violates a model invariant."""


# ---------------------------------------------------------------------------
# parameter groups
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=True)
class SystemParams:
    """Physical constants of the coupled cavity/molecule system.

    ``kappa`` holds the per-molecule weights of the current sum.  When
    omitted it defaults to ``2 q`` for every molecule, the weight for
    which the dynamics derives from the energy function in
    :func:`mbloch.dynamics.hamiltonian`.
    """

    Omega: float        # cavity frequency, > 0
    sigma: float        # cavity damping rate, >= 0
    omega1: float       # lower level frequency
    omega2: float       # upper level frequency, > omega1
    q: float            # field-molecule coupling constant, >= 0
    c: float = 1.0      # wave speed, > 0
    hbar: float = 1.0   # action scale, > 0
    N: int = 1          # number of molecules, >= 1
    kappa: tuple[float, ...] | None = None  # current weights, len N, >= 0

    def __post_init__(self) -> None:
        if self.kappa is None:
            object.__setattr__(self, "kappa", (2.0 * self.q,) * self.N)
        else:
            object.__setattr__(
                self, "kappa", tuple(float(k) for k in self.kappa)
            )
        validate_params(self)

    @property
    def omega(self) -> float:
        """Transition frequency ``omega2 - omega1`` (positive)."""
        return self.omega2 - self.omega1

    @property
    def kappa_array(self) -> np.ndarray:
        return np.asarray(self.kappa, dtype=float)

    @property
    def current_bound(self) -> float:
        """Largest possible |current| over unit-norm molecule states."""
        return 0.5 * float(sum(self.kappa))


def validate_params(params: SystemParams) -> SystemParams:
    """Check every invariant of ``params``; raise naming the bad field."""
    p = params
    if not np.isfinite(p.Omega) or p.Omega <= 0.0:
        raise ValidationError(f"Omega must be positive, got {p.Omega}")
    if not np.isfinite(p.sigma) or p.sigma < 0.0:
        raise ValidationError(f"sigma must be nonnegative, got {p.sigma}")
    if not np.isfinite(p.c) or p.c <= 0.0:
        raise ValidationError(f"c must be positive, got {p.c}")
    if not np.isfinite(p.hbar) or p.hbar <= 0.0:
        raise ValidationError(f"hbar must be positive, got {p.hbar}")
    if not (np.isfinite(p.omega1) and np.isfinite(p.omega2)):
        raise ValidationError("omega1 and omega2 must be finite")
    if p.omega2 <= p.omega1:
        raise ValidationError(
            f"omega2 must exceed omega1, got omega1={p.omega1} omega2={p.omega2}"
        )
    if not np.isfinite(p.q) or p.q < 0.0:
        raise ValidationError(f"q must be nonnegative, got {p.q}")
    if int(p.N) != p.N or p.N < 1:
        raise ValidationError(f"N must be a positive integer, got {p.N}")
    if len(p.kappa) != p.N:
        raise ValidationError(
            f"kappa must have one entry per molecule, got {len(p.kappa)} for N={p.N}"
        )
    for n, k in enumerate(p.kappa):
        if not np.isfinite(k) or k < 0.0:
            raise ValidationError(f"kappa[{n}] must be nonnegative, got {k}")
    return params


@dataclass(frozen=True, eq=True)
class PumpConfig:
    """Periodic external pump with fundamental frequency ``Omega_p``.

    The pump value is the truncated Fourier series

        offset + sum_k  cosine[k-1] cos(k Omega_p t) + sine[k-1] sin(k Omega_p t)

    so ``cosine`` and ``sine`` list harmonic amplitudes starting at the
    fundamental ``k = 1``.
    """

    Omega_p: float
    cosine: tuple[float, ...] = ()
    sine: tuple[float, ...] = ()
    offset: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.Omega_p) or self.Omega_p <= 0.0:
            raise ValidationError(
                f"Omega_p must be positive, got {self.Omega_p}"
            )
        object.__setattr__(self, "cosine", tuple(float(a) for a in self.cosine))
        object.__setattr__(self, "sine", tuple(float(b) for b in self.sine))
        for name in ("cosine", "sine"):
            if not all(np.isfinite(x) for x in getattr(self, name)):
                raise ValidationError(f"pump {name} amplitudes must be finite")
        if not np.isfinite(self.offset):
            raise ValidationError("pump offset must be finite")

    @property
    def period(self) -> float:
        return TWO_PI / self.Omega_p

    def scaled(self, amplitude: float) -> "PumpConfig":
        """Pump with every amplitude (offset included) scaled by ``amplitude``."""
        return PumpConfig(
            Omega_p=self.Omega_p,
            cosine=tuple(amplitude * a for a in self.cosine),
            sine=tuple(amplitude * b for b in self.sine),
            offset=amplitude * self.offset,
        )

    @property
    def is_zero(self) -> bool:
        return self.offset == 0.0 and not any(self.cosine) and not any(self.sine)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FullState:
    """Point of the full phase space R^2 x (S^3)^N.

    ``C`` has shape (N, 2); row n holds the molecule-n amplitude pair.
    Construction enforces unit per-molecule norm within ``tol``.
    """

    A: float
    B: float
    C: np.ndarray
    tol: float = field(default=NORM_TOL, repr=False, compare=False)

    def __post_init__(self) -> None:
        C = np.atleast_2d(np.asarray(self.C, dtype=complex))
        if C.ndim != 2 or C.shape[1] != 2:
            raise ValidationError(f"C must have shape (N, 2), got {C.shape}")
        C = C.copy()
        C.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "A", float(self.A))
        object.__setattr__(self, "B", float(self.B))
        if not (np.isfinite(self.A) and np.isfinite(self.B)):
            raise ValidationError("A and B must be finite")
        if not np.all(np.isfinite(C.view(float))):
            raise ValidationError("C must be finite")
        err = np.abs(np.sum(np.abs(C) ** 2, axis=1) - 1.0)
        worst = int(np.argmax(err))
        if err[worst] > self.tol:
            raise ValidationError(
                f"molecule {worst} charge deviates from 1 by {err[worst]:.3e}"
                f" (tol {self.tol:.1e})"
            )

    @property
    def N(self) -> int:
        return self.C.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flatten to [A, B, re C11, im C11, re C12, im C12, ...]."""
        out = np.empty(2 + 4 * self.N)
        out[0] = self.A
        out[1] = self.B
        out[2::2] = self.C.real.ravel()
        out[3::2] = self.C.imag.ravel()
        return out

    @classmethod
    def from_vector(cls, vec: np.ndarray, tol: float = NORM_TOL) -> "FullState":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or (vec.size - 2) % 4 != 0 or vec.size < 6:
            raise ValidationError(
                f"full state vector must have length 2 + 4N, got {vec.size}"
            )
        N = (vec.size - 2) // 4
        C = (vec[2::2] + 1j * vec[3::2]).reshape(N, 2)
        return cls(A=vec[0], B=vec[1], C=C, tol=tol)

    def normalized(self) -> "FullState":
        """Rescale each molecule pair to exact unit norm."""
        norms = np.sqrt(np.sum(np.abs(self.C) ** 2, axis=1, keepdims=True))
        return FullState(A=self.A, B=self.B, C=self.C / norms)


@dataclass(frozen=True, eq=False)
class ReducedState:
    """Point of the reduced phase space R^2 x (S^2)^N.

    ``s`` has shape (N, 3); row n is the unit Bloch vector (u, v, w) of
    molecule n, with w the population inversion.
    """

    A: float
    B: float
    s: np.ndarray
    tol: float = field(default=NORM_TOL, repr=False, compare=False)

    def __post_init__(self) -> None:
        s = np.atleast_2d(np.asarray(self.s, dtype=float))
        if s.ndim != 2 or s.shape[1] != 3:
            raise ValidationError(f"s must have shape (N, 3), got {s.shape}")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "A", float(self.A))
        object.__setattr__(self, "B", float(self.B))
        if not (np.isfinite(self.A) and np.isfinite(self.B)):
            raise ValidationError("A and B must be finite")
        if not np.all(np.isfinite(s)):
            raise ValidationError("s must be finite")
        err = np.abs(np.linalg.norm(s, axis=1) - 1.0)
        worst = int(np.argmax(err))
        if err[worst] > self.tol:
            raise ValidationError(
                f"Bloch vector {worst} norm deviates from 1 by {err[worst]:.3e}"
                f" (tol {self.tol:.1e})"
            )

    @property
    def N(self) -> int:
        return self.s.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flatten to [A, B, u1, v1, w1, u2, v2, w2, ...]."""
        return np.concatenate(([self.A, self.B], self.s.ravel()))

    @classmethod
    def from_vector(
        cls, vec: np.ndarray, tol: float = NORM_TOL
    ) -> "ReducedState":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or (vec.size - 2) % 3 != 0 or vec.size < 5:
            raise ValidationError(
                f"reduced state vector must have length 2 + 3N, got {vec.size}"
            )
        N = (vec.size - 2) // 3
        return cls(A=vec[0], B=vec[1], s=vec[2:].reshape(N, 3), tol=tol)

    def normalized(self) -> "ReducedState":
        norms = np.linalg.norm(self.s, axis=1, keepdims=True)
        return ReducedState(A=self.A, B=self.B, s=self.s / norms)


@dataclass(frozen=True, eq=False)
class GaugePhases:
    """Element of the per-molecule phase torus, angles stored mod 2 pi."""

    thetas: np.ndarray

    def __post_init__(self) -> None:
        th = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        if th.ndim != 1 or th.size < 1:
            raise ValidationError("thetas must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(th)):
            raise ValidationError("thetas must be finite")
        th = np.mod(th, TWO_PI)
        th.setflags(write=False)
        object.__setattr__(self, "thetas", th)

    @property
    def N(self) -> int:
        return self.thetas.size

    def compose(self, other: "GaugePhases") -> "GaugePhases":
        if self.N != other.N:
            raise ValidationError("phase tuples act on different sizes")
        return GaugePhases(self.thetas + other.thetas)

    def inverse(self) -> "GaugePhases":
        return GaugePhases(-self.thetas)


# ---------------------------------------------------------------------------
# gauge action and Bloch reduction
# ---------------------------------------------------------------------------


def gauge_act(phases: GaugePhases, x: FullState) -> FullState:
    """Rotate each molecule pair by its phase; the cavity part is fixed."""
    if phases.N != x.N:
        raise ValidationError(
            f"phase count {phases.N} does not match molecule count {x.N}"
        )
    factors = np.exp(1j * phases.thetas)[:, None]
    return FullState(A=x.A, B=x.B, C=factors * x.C, tol=x.tol)


def hopf_project(x: FullState) -> ReducedState:
    """Map each molecule amplitude pair to its Bloch vector.

    The map is invariant under :func:`gauge_act` and sends unit-norm
    pairs to unit Bloch vectors exactly (up to roundoff).
    """
    z = np.conj(x.C[:, 0]) * x.C[:, 1]
    s = np.column_stack(
        (2.0 * z.real, 2.0 * z.imag, np.abs(x.C[:, 1]) ** 2 - np.abs(x.C[:, 0]) ** 2)
    )
    # |s| equals the molecule charge exactly, so a charge error delta
    # gives a norm error of about 2*delta; allow a margin
    return ReducedState(A=x.A, B=x.B, s=s, tol=4.0 * x.tol)


def hopf_section(y: ReducedState) -> FullState:
    """Canonical lift of a reduced state: each C1 real and nonnegative.

    At the north pole (u = v = 0, w = 1, where the canonical chart
    degenerates) the lift is (C1, C2) = (0, 1).
    """
    deviation = float(np.max(np.abs(np.linalg.norm(y.s, axis=1) - 1.0)))
    if deviation > NORM_TOL:
        raise ValidationError(
            f"hopf_section needs unit Bloch vectors, worst deviation {deviation:.3e}"
        )
    N = y.N
    C = np.empty((N, 2), dtype=complex)
    for n in range(N):
        u, v, w = y.s[n]
        t2 = u * u + v * v
        if w > 0.0:
            if t2 < np.finfo(float).tiny:
                # a subnormal t2 has lost most of its mantissa, so the chart
                # below would be inaccurate; such states sit within ~1e-154
                # of the pole, where the exact pole lift is correct anyway
                C[n, 0] = 0.0
                C[n, 1] = 1.0
                continue
            # on the unit sphere t2 / (2 (1 + w)) equals (1 - w) / 2,
            # but has no cancellation near the pole
            c1 = np.sqrt(t2 / (2.0 * (1.0 + w)))
        else:
            c1 = np.sqrt((1.0 - w) / 2.0)
        C[n, 0] = c1
        C[n, 1] = (u + 1j * v) / (2.0 * c1)
    # the construction tolerance mirrors the input norm tolerance; the
    # final normalization snaps the charge back to one
    return FullState(A=y.A, B=y.B, C=C, tol=max(4.0 * y.tol, NORM_TOL)).normalized()


# ---------------------------------------------------------------------------
# digests
# ---------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in sorted(value.items())}
    return value


def content_digest(*parts) -> str:
    """Stable hex digest of plain-data parts (dataclasses, dicts, arrays).

    Floats are hashed by their shortest round-trip repr, so equal values
    give equal digests across runs and processes.
    """
    payload = []
    for part in parts:
        if hasattr(part, "__dataclass_fields__"):
            d = {
                name: getattr(part, name)
                for name in part.__dataclass_fields__
                if name != "tol"
            }
            payload.append({type(part).__name__: _jsonable(d)})
        else:
            payload.append(_jsonable(part))
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
