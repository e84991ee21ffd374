"""Cavity mode coupled to two-level molecules: simulation, verification,
and periodic-orbit continuation.

Layers:

- ``model``: parameter and state types, gauge action, Bloch projection.
- ``dynamics``: vector fields, Hamiltonian form, decay coefficients,
  the large-amplitude cutoff field.
- ``integrate``: adaptive and fixed-step integration, trajectory
  containers, closed-form oracles, CSV persistence.
- ``poincare``: period-map Newton solver, Floquet data, seed grids,
  census and continuation drivers.
- ``diagnostics``: conservation, decay, and periodicity checks.
- ``cli``: the ``mbloch`` command.
"""

from .dynamics import (
    ModifiedFieldConfig,
    coupling_a,
    current,
    default_epsilon,
    field_full,
    field_modified,
    field_reduced,
    hamiltonian,
    lyapunov_V,
    lyapunov_decay_coeffs,
    pump_value,
)
from .diagnostics import (
    CheckResult,
    VerificationReport,
    check_apriori,
    check_charge,
    check_lyapunov,
    check_periodicity,
    check_sphere_norm,
    combine,
    gauge_factor,
    population_inversion,
)
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    integrate,
    integrate_with_variational,
    rabi_reference,
    read_trajectory_csv,
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
    hopf_section,
)
from .poincare import (
    Branch,
    CensusResult,
    FixedPointResult,
    SeedGrid,
    bounding_radius,
    continuation,
    default_modified_config,
    find_all_periodic,
    grid_seeds,
    lefschetz_index,
    newton_fixed_point,
    poincare_map,
    tangent_basis,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "CensusResult",
    "CheckResult",
    "FixedPointResult",
    "FullState",
    "GaugePhases",
    "IntegrationError",
    "IntegratorConfig",
    "ModifiedFieldConfig",
    "PumpConfig",
    "ReducedState",
    "SeedGrid",
    "SystemParams",
    "Trajectory",
    "ValidationError",
    "VerificationReport",
    "bounding_radius",
    "check_apriori",
    "check_charge",
    "check_lyapunov",
    "check_periodicity",
    "check_sphere_norm",
    "combine",
    "content_digest",
    "continuation",
    "coupling_a",
    "current",
    "default_epsilon",
    "default_modified_config",
    "field_full",
    "field_modified",
    "field_reduced",
    "find_all_periodic",
    "gauge_act",
    "gauge_factor",
    "grid_seeds",
    "hamiltonian",
    "hopf_project",
    "hopf_section",
    "integrate",
    "integrate_with_variational",
    "lefschetz_index",
    "lyapunov_V",
    "lyapunov_decay_coeffs",
    "newton_fixed_point",
    "poincare_map",
    "population_inversion",
    "pump_value",
    "rabi_reference",
    "read_trajectory_csv",
    "tangent_basis",
    "write_trajectory_csv",
]
