"""Marker-cloud Euler flow coupled to point vortices, with diagnostics
that verify the conservation and locality laws of the coupled system."""

from vortexwave.config import (
    ConfigError,
    DiagnosticsSpec,
    OutputSpec,
    PatchSpec,
    ScenarioConfig,
    VortexSpec,
    emit_config,
    load_config,
    parse_config,
)
from vortexwave.diagnostics import (
    DiagnosticsRecord,
    FitResult,
    TestFunction,
    TwinSeries,
    collision_exponent,
    collision_margin,
    fit_constancy_constant,
    hole_radius,
    lp_drift,
    predicted_constancy_radius,
    support_growth_fit,
    twin_divergence,
    weak_residual,
)
from vortexwave.dynamics import (
    CollisionError,
    PointVortexState,
    SimState,
    SimulationError,
    Snapshot,
    Trajectory,
    init_scenario,
    marker_rhs,
    rk4_step,
    run,
    total_field,
    twin_states,
    vortex_field,
    vortex_rhs,
)
from vortexwave.field import (
    CirculationMismatchWarning,
    Grid,
    MarkerCloud,
    ScalarField,
    VectorField,
    constancy_radius,
    deposit_vorticity,
    grid_lp_norm,
    harmonic_mean_value_defect,
    induced_velocity,
    l2_velocity_diff,
    support_radius,
    velocity_on_grid,
)
from vortexwave.kernels import (
    al_modulus,
    biot_savart,
    blob_kernel,
    cutoff,
    regularized_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "CirculationMismatchWarning",
    "CollisionError",
    "ConfigError",
    "DiagnosticsRecord",
    "DiagnosticsSpec",
    "FitResult",
    "Grid",
    "MarkerCloud",
    "OutputSpec",
    "PatchSpec",
    "PointVortexState",
    "ScalarField",
    "ScenarioConfig",
    "SimState",
    "SimulationError",
    "Snapshot",
    "TestFunction",
    "Trajectory",
    "TwinSeries",
    "VectorField",
    "VortexSpec",
    "al_modulus",
    "biot_savart",
    "blob_kernel",
    "collision_exponent",
    "collision_margin",
    "constancy_radius",
    "cutoff",
    "deposit_vorticity",
    "emit_config",
    "fit_constancy_constant",
    "grid_lp_norm",
    "harmonic_mean_value_defect",
    "hole_radius",
    "induced_velocity",
    "init_scenario",
    "l2_velocity_diff",
    "load_config",
    "lp_drift",
    "marker_rhs",
    "parse_config",
    "predicted_constancy_radius",
    "regularized_kernel",
    "rk4_step",
    "run",
    "support_growth_fit",
    "support_radius",
    "total_field",
    "twin_divergence",
    "twin_states",
    "velocity_on_grid",
    "vortex_field",
    "vortex_rhs",
    "weak_residual",
]
