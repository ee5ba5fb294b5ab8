"""Time evolution of the weakly dissipative muHS equation on the circle.

The equation is advanced in the nonlocal form

    u_t + u u_x = -d/dx A^{-1}( 2 mu0 e^{-lam t} u + u_x^2 / 2 ) - lam u,

where A is the mu-Helmholtz operator and mu0 is the initial mean.  The mean
factor is frozen analytically (mu(u(t)) = mu0 e^{-lam t} along exact
solutions), so the measured mean stays a genuine diagnostic rather than an
enforced constraint.  Space is Fourier collocation with 2/3-rule dealiasing
of the quadratic products; time is classical four-stage Runge-Kutta with an
adaptive step.  Wave breaking manifests as the slope minimum collapsing to
-infinity, and the run loop watches exactly that.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .field import (
    PeriodicField,
    _is_pow2,
    dealias_mask,
    derivative_symbol,
    embed_coeffs,
    field_from_mode_list,
    field_to_mode_list,
    grid,
    mode_energy,
    rfft_wavenumbers,
)
from .muops import grad_inverse_symbol

#: slope level regarded as collapsed when classifying a tail-triggered stop:
#: -BREAKING_SLOPE_FACTOR * (1 + lam).  The same level marks the start of the
#: asymptotic window used by the blow-up rate fit.
BREAKING_SLOPE_FACTOR = 10.0

DIAGNOSTICS_COLUMNS = (
    "t", "mu", "mu_residual", "h1_sq", "h1_residual",
    "min_ux", "argmin_x", "max_abs_u", "tail_frac", "dt",
)


class ScenarioError(ValueError):
    """Invalid experiment description; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class NonFiniteStateError(ArithmeticError):
    """The integrator produced non-finite samples (overflow near breaking)."""


class Outcome(str, Enum):
    COMPLETED = "COMPLETED"
    BREAKING_DETECTED = "BREAKING_DETECTED"
    RESOLUTION_EXHAUSTED = "RESOLUTION_EXHAUSTED"


# ---------------------------------------------------------------------------
# experiment description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Full experiment description.

    ``initial`` is a mode list ``{"mean": float, "modes": [{k, cos, sin}]}``,
    the same schema fields serialize to.  The JSON key for ``lam`` is
    ``lambda`` (reserved word in Python).
    """

    lam: float
    initial: dict
    grid_n: int
    t_end: float
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    safety: float = 0.5
    m_stop: float = -1e4
    tail_stop: float = 1e-4
    output_stride: int = 1
    snapshot_stride: int = 0

    def validate(self) -> None:
        if not isinstance(self.lam, (int, float)) or not self.lam > 0:
            raise ScenarioError("lambda", "must be a positive real")
        if not (isinstance(self.grid_n, int) and _is_pow2(self.grid_n) and self.grid_n >= 32):
            raise ScenarioError("grid_n", "must be a power of two >= 32")
        if not self.t_end >= 0:
            raise ScenarioError("t_end", "must be >= 0")
        if not self.dt_init > 0:
            raise ScenarioError("dt_init", "must be > 0")
        if not 0 < self.dt_min < self.dt_init:
            raise ScenarioError("dt_min", "must satisfy 0 < dt_min < dt_init")
        if not 0 < self.safety <= 1:
            raise ScenarioError("safety", "must lie in (0, 1]")
        if not self.m_stop <= -10:
            raise ScenarioError("m_stop", "must be <= -10")
        if not 0 < self.tail_stop < 1:
            raise ScenarioError("tail_stop", "must lie in (0, 1)")
        if not (isinstance(self.output_stride, int) and self.output_stride >= 1):
            raise ScenarioError("output_stride", "must be an integer >= 1")
        if not (isinstance(self.snapshot_stride, int) and self.snapshot_stride >= 0):
            raise ScenarioError("snapshot_stride", "must be an integer >= 0")
        try:
            self.initial_field()
        except (ValueError, TypeError) as exc:
            raise ScenarioError("initial", str(exc)) from exc

    def initial_field(self) -> PeriodicField:
        f = field_from_mode_list(self.initial, self.grid_n)
        for entry in self.initial.get("modes", []):
            if int(entry["k"]) > self.grid_n // 3:
                raise ValueError(
                    f"mode k={entry['k']} lies outside the dealiased band of grid_n={self.grid_n}"
                )
        return f

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        if not isinstance(obj, dict):
            raise ScenarioError("<root>", "scenario must be a JSON object")
        known = {
            "lambda", "initial", "grid_n", "t_end", "dt_init", "dt_min",
            "safety", "m_stop", "tail_stop", "output_stride", "snapshot_stride",
        }
        unknown = set(obj) - known
        if unknown:
            raise ScenarioError(sorted(unknown)[0], "unknown scenario field")
        for required in ("lambda", "initial", "grid_n", "t_end"):
            if required not in obj:
                raise ScenarioError(required, "missing required field")
        kwargs = dict(obj)
        kwargs["lam"] = kwargs.pop("lambda")
        try:
            scenario = cls(**kwargs)
        except TypeError as exc:
            raise ScenarioError("<root>", str(exc)) from exc
        scenario.validate()
        return scenario

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "initial": self.initial,
            "grid_n": self.grid_n,
            "t_end": self.t_end,
            "dt_init": self.dt_init,
            "dt_min": self.dt_min,
            "safety": self.safety,
            "m_stop": self.m_stop,
            "tail_stop": self.tail_stop,
            "output_stride": self.output_stride,
            "snapshot_stride": self.snapshot_stride,
        }


@dataclass(frozen=True, eq=False)
class SimulationState:
    """Instantaneous solver state; mu0 and mu1 are frozen from the data at t=0."""

    t: float
    u: PeriodicField
    mu0: float
    mu1: float


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-sample observables; residuals are raw differences, no rescaling."""

    t: float
    mu: float
    mu_residual: float
    h1_sq: float
    h1_residual: float
    min_ux: float
    argmin_x: float
    max_abs_u: float
    linf_bound_margin: float
    tail_frac: float
    dt: float


@dataclass(frozen=True, eq=False)
class SnapshotSeries:
    """Stored spectral trajectory (normalized half-spectra, one row per time)."""

    times: np.ndarray
    coefs: np.ndarray
    n: int


@dataclass(frozen=True, eq=False)
class RunResult:
    records: list
    outcome: Outcome
    state_final: SimulationState
    scenario: Scenario
    mu0: float
    mu1: float
    snapshots: Optional[SnapshotSeries] = None

    @property
    def t_detect(self) -> Optional[float]:
        return None if self.outcome is Outcome.COMPLETED else self.state_final.t

    @property
    def m_last(self) -> float:
        return self.records[-1].min_ux


# ---------------------------------------------------------------------------
# spectral workspace and the semi-discrete right-hand side
# ---------------------------------------------------------------------------

class SpectralWorkspace:
    """Precomputed multipliers for one grid size."""

    def __init__(self, n: int):
        self.n = n
        k = rfft_wavenumbers(n)
        self.d1 = derivative_symbol(n, 1)
        self.grad_inv = grad_inverse_symbol(n)
        self.mask = dealias_mask(n)
        self.kcut = n // 3
        self.tail_band = k > self.kcut // 2
        self.nonzero = k > 0
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        self.h1_weights = w * (2 * np.pi * k).astype(float) ** 2

    def to_samples(self, c: np.ndarray) -> np.ndarray:
        return np.fft.irfft(c * self.n, self.n)

    def to_coeffs(self, u: np.ndarray) -> np.ndarray:
        return np.fft.rfft(u) / self.n

    def refined(self, c: np.ndarray, factor: int = 4) -> np.ndarray:
        m = factor * self.n
        return np.fft.irfft(embed_coeffs(c, self.n, m) * m, m)


_WORKSPACES: dict[int, SpectralWorkspace] = {}


def get_workspace(n: int) -> SpectralWorkspace:
    ws = _WORKSPACES.get(n)
    if ws is None:
        ws = _WORKSPACES[n] = SpectralWorkspace(n)
    return ws


def _forcing_coeffs(c: np.ndarray, t: float, mu0: float, lam: float,
                    ws: SpectralWorkspace) -> np.ndarray:
    """Nonlocal forcing -d/dx A^{-1}(2 mu0 e^{-lam t} u + u_x^2 / 2)."""
    u = ws.to_samples(c)
    ux = ws.to_samples(ws.d1 * c)
    g = ws.to_coeffs((2.0 * mu0 * math.exp(-lam * t)) * u + 0.5 * ux * ux)
    return -ws.grad_inv * (g * ws.mask)


def _rhs_coeffs(c: np.ndarray, t: float, mu0: float, lam: float,
                ws: SpectralWorkspace) -> np.ndarray:
    u = ws.to_samples(c)
    ux = ws.to_samples(ws.d1 * c)
    adv = ws.to_coeffs(u * ux)
    g = ws.to_coeffs((2.0 * mu0 * math.exp(-lam * t)) * u + 0.5 * ux * ux)
    return -adv * ws.mask - ws.grad_inv * (g * ws.mask) - lam * c


def _step_coeffs(c: np.ndarray, t: float, dt: float, mu0: float, lam: float,
                 ws: SpectralWorkspace) -> np.ndarray:
    """One classical RK4 step; every stage is already dealiased by the rhs."""
    k1 = _rhs_coeffs(c, t, mu0, lam, ws)
    k2 = _rhs_coeffs(c + 0.5 * dt * k1, t + 0.5 * dt, mu0, lam, ws)
    k3 = _rhs_coeffs(c + 0.5 * dt * k2, t + 0.5 * dt, mu0, lam, ws)
    k4 = _rhs_coeffs(c + dt * k3, t + dt, mu0, lam, ws)
    return (c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)) * ws.mask


def _h1_sq(c: np.ndarray, ws: SpectralWorkspace) -> float:
    return float(np.sum(ws.h1_weights * np.abs(c) ** 2))


def rhs(u: PeriodicField, t: float, mu0: float, lam: float) -> PeriodicField:
    """Right-hand side of the nonlocal evolution form at time t.

    Quadratic products are dealiased by the 2/3 rule before the nonlocal
    inversion, so repeated evaluation keeps the state band-limited.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    ws = get_workspace(u.n)
    c = _rhs_coeffs(ws.to_coeffs(u.samples), t, mu0, lam, ws)
    return PeriodicField(ws.to_samples(c))


def step(state: SimulationState, dt: float, scenario: Scenario) -> SimulationState:
    """Advance one RK4 step of size dt.

    Raises :class:`NonFiniteStateError` when the update overflows, which is
    how breaking announces itself to a fixed-step caller.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ws = get_workspace(state.u.n)
    with np.errstate(over="ignore", invalid="ignore"):
        c = _step_coeffs(ws.to_coeffs(state.u.samples), state.t, dt,
                         state.mu0, scenario.lam, ws)
    if not np.all(np.isfinite(c.view(float))):
        raise NonFiniteStateError(f"non-finite state after step from t={state.t:g}")
    return SimulationState(t=state.t + dt, u=PeriodicField(ws.to_samples(c)),
                           mu0=state.mu0, mu1=state.mu1)


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Observation:
    mu: float
    h1_sq: float
    min_ux: float
    argmin_x: float
    max_abs_u: float
    max_dev: float
    tail_frac: float


def _observe(c: np.ndarray, ws: SpectralWorkspace) -> _Observation:
    mu = float(c[0].real)
    u4 = ws.refined(c)
    ux4 = ws.refined(ws.d1 * c)
    j = int(np.argmin(ux4))
    energy = mode_energy(c, ws.n)
    total = float(np.sum(energy[ws.nonzero]))
    tail = float(np.sum(energy[ws.tail_band])) / total if total > 0 else 0.0
    return _Observation(
        mu=mu,
        h1_sq=_h1_sq(c, ws),
        min_ux=float(ux4[j]),
        argmin_x=j / float(u4.size),
        max_abs_u=float(np.max(np.abs(u4))),
        max_dev=float(np.max(np.abs(u4 - mu))),
        tail_frac=tail,
    )


def _record(t: float, obs: _Observation, dt: float, mu0: float, mu1: float,
            lam: float) -> DiagnosticsRecord:
    linf_bound = abs(mu0) + (math.sqrt(3.0) / 6.0) * mu1
    return DiagnosticsRecord(
        t=t,
        mu=obs.mu,
        mu_residual=obs.mu - mu0 * math.exp(-lam * t),
        h1_sq=obs.h1_sq,
        h1_residual=obs.h1_sq - mu1 * mu1 * math.exp(-2.0 * lam * t),
        min_ux=obs.min_ux,
        argmin_x=obs.argmin_x,
        max_abs_u=obs.max_abs_u,
        linf_bound_margin=linf_bound - (obs.max_dev + abs(obs.mu)),
        tail_frac=obs.tail_frac,
        dt=dt,
    )


def run(scenario: Scenario) -> RunResult:
    """Integrate from t=0 to t_end, or to detection, whichever comes first.

    Stop conditions and their classification:

    * slope minimum at or below ``m_stop``  -> BREAKING_DETECTED,
    * adaptive dt collapsing below ``dt_min`` -> BREAKING_DETECTED,
    * spectral tail fraction above ``tail_stop`` -> BREAKING_DETECTED when the
      slope minimum has already collapsed below -10 (1 + lambda), otherwise
      RESOLUTION_EXHAUSTED (the grid ran out before the slope did).
    """
    scenario.validate()
    n = scenario.grid_n
    ws = get_workspace(n)
    lam = scenario.lam

    u0 = scenario.initial_field()
    c = ws.to_coeffs(u0.samples) * ws.mask
    mu0 = float(c[0].real)
    mu1 = math.sqrt(_h1_sq(c, ws))
    slope_collapse = -BREAKING_SLOPE_FACTOR * (1.0 + lam)

    t = 0.0
    accepted = 0
    dt_used = 0.0
    records: list[DiagnosticsRecord] = []
    snap_t: list[float] = []
    snap_c: list[np.ndarray] = []
    outcome: Optional[Outcome] = None

    def emit(obs):
        records.append(_record(t, obs, dt_used, mu0, mu1, lam))

    def snapshot():
        snap_t.append(t)
        snap_c.append(c.copy())

    if scenario.snapshot_stride:
        snapshot()

    obs = _observe(c, ws)
    emit(obs)
    t_eps = 1e-12 * max(1.0, scenario.t_end)

    while True:
        if obs.min_ux <= scenario.m_stop:
            outcome = Outcome.BREAKING_DETECTED
            break
        if obs.tail_frac > scenario.tail_stop:
            outcome = (Outcome.BREAKING_DETECTED if obs.min_ux <= slope_collapse
                       else Outcome.RESOLUTION_EXHAUSTED)
            break
        if t >= scenario.t_end - t_eps:
            outcome = Outcome.COMPLETED
            break

        dt = scenario.dt_init
        if obs.max_abs_u > 0:
            dt = min(dt, scenario.safety / (obs.max_abs_u * n))
        if obs.min_ux < 0:
            dt = min(dt, scenario.safety / abs(obs.min_ux))
        dt = min(dt, scenario.t_end - t)

        with np.errstate(over="ignore", invalid="ignore"):
            c_new = _step_coeffs(c, t, dt, mu0, lam, ws)
            while not np.all(np.isfinite(c_new.view(float))):
                dt *= 0.5
                if dt < scenario.dt_min:
                    break
                c_new = _step_coeffs(c, t, dt, mu0, lam, ws)
        if dt < scenario.dt_min:
            outcome = Outcome.BREAKING_DETECTED
            break

        c = c_new
        t += dt
        dt_used = dt
        accepted += 1
        obs = _observe(c, ws)
        if accepted % scenario.output_stride == 0:
            emit(obs)
        if scenario.snapshot_stride and accepted % scenario.snapshot_stride == 0:
            snapshot()

    if records[-1].t != t:
        emit(obs)
    snapshots = None
    if scenario.snapshot_stride:
        if snap_t[-1] != t:
            snapshot()
        snapshots = SnapshotSeries(times=np.asarray(snap_t),
                                   coefs=np.asarray(snap_c), n=n)

    state = SimulationState(t=t, u=PeriodicField(ws.to_samples(c)), mu0=mu0, mu1=mu1)
    return RunResult(records=records, outcome=outcome, state_final=state,
                     scenario=scenario, mu0=mu0, mu1=mu1, snapshots=snapshots)


# ---------------------------------------------------------------------------
# diagnostics serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def diagnostics_to_csv_text(records: list) -> str:
    out = io.StringIO()
    out.write(",".join(DIAGNOSTICS_COLUMNS) + "\n")
    for r in records:
        out.write(",".join(_fmt(getattr(r, name)) for name in DIAGNOSTICS_COLUMNS) + "\n")
    return out.getvalue()


def diagnostics_from_csv_text(text: str) -> list:
    import csv as _csv

    reader = _csv.DictReader(io.StringIO(text))
    missing = set(DIAGNOSTICS_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"diagnostics CSV missing columns: {sorted(missing)}")
    records = []
    for row in reader:
        records.append(DiagnosticsRecord(
            t=float(row["t"]),
            mu=float(row["mu"]),
            mu_residual=float(row["mu_residual"]),
            h1_sq=float(row["h1_sq"]),
            h1_residual=float(row["h1_residual"]),
            min_ux=float(row["min_ux"]),
            argmin_x=float(row["argmin_x"]),
            max_abs_u=float(row["max_abs_u"]),
            linf_bound_margin=0.0,
            tail_frac=float(row["tail_frac"]),
            dt=float(row["dt"]),
        ))
    return records
