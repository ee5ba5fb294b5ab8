"""Pseudospectral simulator and verification harness for the weakly
dissipative muHS equation on the unit circle."""

from .field import (
    PeriodicField,
    Spectrum,
    SharpInequalityCheck,
    check_sharp_inequality,
    derivative,
    h1_seminorm_sq,
    mean,
    random_band_limited,
    refined_samples,
)
from .muops import (
    apply_helmholtz,
    dx_helmholtz_inverse,
    dx_helmholtz_inverse_quadrature,
    helmholtz_solve_quadrature,
    helmholtz_solve_spectral,
    inverse_second_derivative_residual,
)
from .dynamics import (
    DiagnosticsRecord,
    NonFiniteStateError,
    Outcome,
    RunResult,
    Scenario,
    ScenarioError,
    SimulationState,
    rhs,
    run,
    step,
)
from .analysis import (
    BlowupReport,
    CertificateReport,
    InsufficientSamplesError,
    RATE_BAND,
    certify,
    fit_blowup_rate,
    slope_evolution_residual,
)
from .lagrange import (
    AnalyticSampler,
    FlowDegenerateError,
    FlowMap,
    SnapshotSampler,
    advance_flow,
    advective_reconstruction_error,
    flow_conservation_residual,
    verify_flow_conservation,
)

__version__ = "0.1.0"

__all__ = [
    "PeriodicField", "Spectrum", "SharpInequalityCheck", "check_sharp_inequality",
    "derivative", "h1_seminorm_sq", "mean", "random_band_limited", "refined_samples",
    "apply_helmholtz", "dx_helmholtz_inverse", "dx_helmholtz_inverse_quadrature",
    "helmholtz_solve_quadrature", "helmholtz_solve_spectral",
    "inverse_second_derivative_residual",
    "DiagnosticsRecord", "NonFiniteStateError", "Outcome", "RunResult", "Scenario",
    "ScenarioError", "SimulationState", "rhs", "run", "step",
    "BlowupReport", "CertificateReport", "InsufficientSamplesError", "RATE_BAND",
    "certify", "fit_blowup_rate", "slope_evolution_residual",
    "AnalyticSampler", "FlowDegenerateError", "FlowMap", "SnapshotSampler",
    "advance_flow", "advective_reconstruction_error", "flow_conservation_residual",
    "verify_flow_conservation",
    "__version__",
]
