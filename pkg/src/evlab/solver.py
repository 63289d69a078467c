"""Semi-discrete Galerkin system on the torus and its time integration.

The solver advances the projected system

    d/dt vhat = -P_n[ P div(v (x) v) ] + nu Laplacian vhat + P_n[ P fhat(t) ]

with an integrating-factor Runge-Kutta-4 scheme: the viscous part is
integrated exactly modewise by exp(-nu |k|^2 dt), the rest at classical RK4
order. For a vanishing nonlinear part (single modes, Taylor-Green, pure
Stokes) the update is therefore exact up to roundoff, which keeps the energy
identities sharp enough for the certificate machinery downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import spectral
from .errors import BlowUpError, ConfigurationError, UsageError
from .spectral import GridSpec, SpectralVelocityField, galerkin_project, leray_project
from .testfields import Forcing

RK4_IMAGINARY_STABILITY = 2.8


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one Galerkin run."""

    grid: GridSpec
    nu: float
    dt: float
    t_final: float
    cutoff: int
    initial_condition: SpectralVelocityField
    forcing: Forcing | None = None
    integrator: str = "if-rk4"
    snapshot_stride: int = 1
    override_stability: bool = False
    ic_spec: str = ""
    forcing_spec: str = "zero"

    def __post_init__(self):
        if self.nu < 0:
            raise ConfigurationError(f"viscosity must be nonnegative, got {self.nu}")
        if self.dt <= 0 or self.t_final <= 0:
            raise ConfigurationError("dt and t_final must be positive")
        if self.integrator != "if-rk4":
            raise ConfigurationError(f"unknown integrator {self.integrator!r}")
        if self.cutoff < 1 or self.cutoff > self.grid.dealias_cutoff:
            raise ConfigurationError(
                f"galerkin cutoff {self.cutoff} outside [1, {self.grid.dealias_cutoff}]"
                " (dealias-compatible range)"
            )
        if self.snapshot_stride < 1:
            raise ConfigurationError("snapshot_stride must be >= 1")
        if self.initial_condition.grid != self.grid:
            raise ConfigurationError("initial condition grid does not match config grid")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def viscous_stability_number(self) -> float:
        """dt * nu * max|k|^2; informational, the viscous factor is exact."""
        return self.dt * self.nu * 2 * float(self.grid.dim) * (self.grid.n / 2) ** 2

    def advective_stability_number(self, v: SpectralVelocityField) -> float:
        """dt * kmax * max|v|, the RK4 imaginary-axis stability proxy."""
        vmax = spectral.compute_norm(v, "C0")
        return self.dt * self.cutoff * vmax

    def to_dict(self) -> dict:
        return {
            "grid_dim": self.grid.dim,
            "grid_n": self.grid.n,
            "nu": self.nu,
            "dt": self.dt,
            "t_final": self.t_final,
            "galerkin_cutoff": self.cutoff,
            "integrator": self.integrator,
            "snapshot_stride": self.snapshot_stride,
            "ic": self.ic_spec,
            "forcing": self.forcing_spec,
        }


@dataclass(frozen=True)
class Trajectory:
    """Ordered (time, field) snapshots of one run, uniform stride."""

    times: np.ndarray
    fields: list[SpectralVelocityField]
    config: SolverConfig | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if len(times) != len(self.fields) or len(times) == 0:
            raise ConfigurationError("times and fields must be nonempty and aligned")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("snapshot times must be strictly increasing")
        object.__setattr__(self, "times", spectral._freeze(times))

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def grid(self) -> GridSpec:
        return self.fields[0].grid

    def index_of_nearest(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t))
        candidates = [j for j in (i - 1, i, i + 1) if 0 <= j < len(self.times)]
        return min(candidates, key=lambda j: abs(self.times[j] - t))

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        i = self.index_of_nearest(t)
        if abs(self.times[i] - t) > tol:
            raise UsageError(f"t={t} is not a snapshot time")
        return i

    def field_at(self, t: float) -> SpectralVelocityField:
        return self.fields[self.index_of(t)]

    def kinetic_energies(self) -> np.ndarray:
        return np.array([f.energy() for f in self.fields])

    def max_divergence(self) -> float:
        return max(f.max_divergence() for f in self.fields)

    def restrict(self, t0: float) -> "Trajectory":
        i = self.index_of(t0)
        return Trajectory(self.times[i:].copy(), self.fields[i:], self.config)

    def distance_l2l2(self, other: "Trajectory") -> float:
        """||v1 - v2||_{L2(0,T;L2)} by trapezoid over the shared time grid."""
        if len(self) != len(other) or np.max(np.abs(self.times - other.times)) > 1e-9:
            raise UsageError("trajectories are not on the same time grid")
        sq = np.array([(a - b).norm_l2() ** 2 for a, b in zip(self.fields, other.fields)])
        return float(np.sqrt(cumulative_trapezoid(self.times, sq)[-1]))


def trajectory_test_field(traj: Trajectory, label: str = "own-projection"):
    """Expose a stored run as a comparison field: values by snapshot lookup,
    the time derivative through the semi-discrete system it solves."""
    from .testfields import TestField

    if traj.config is None:
        raise UsageError("trajectory needs config provenance for its time derivative")

    def coeff_fn(t: float):
        return traj.field_at(t).coeffs

    def dt_fn(t: float):
        return semidiscrete_rhs(traj.field_at(t), t, traj.config).coeffs

    return TestField(traj.grid, label, coeff_fn, dt_fn, steady=False,
                     kind="spectral-time-series")


def semidiscrete_rhs(
    v: SpectralVelocityField, t: float, config: SolverConfig
) -> SpectralVelocityField:
    """Full right-hand side P_n[-conv(v) + P f(t)] + nu Laplacian v."""
    rhs = _nonlinear_rhs(v, t, config)
    if config.nu > 0:
        rhs = rhs + config.nu * v.laplacian()
    return rhs


def _nonlinear_rhs(v, t, config) -> SpectralVelocityField:
    out = -spectral.convection(v)
    if config.forcing is not None:
        out = out + leray_project(config.forcing.velocity(t))
    return galerkin_project(out, config.cutoff)


def integrate(
    config: SolverConfig,
    nonlinear: Callable[[SpectralVelocityField, float], SpectralVelocityField] | None = None,
) -> Trajectory:
    """Run IF-RK4 from the (projected) initial condition to t_final.

    ``nonlinear`` overrides the nonlinear term; passing a forcing-only closure
    turns this into the exact-factor linear Stokes propagator.
    """
    grid = config.grid
    v0 = galerkin_project(leray_project(config.initial_condition), config.cutoff)
    if not config.override_stability:
        cfl = config.advective_stability_number(v0)
        if cfl > RK4_IMAGINARY_STABILITY:
            raise UsageError(
                f"advective stability number {cfl:.3g} exceeds {RK4_IMAGINARY_STABILITY}; "
                "reduce dt or set override_stability"
            )
    if nonlinear is None:
        nonlinear = lambda u, t: _nonlinear_rhs(u, t, config)

    dt = config.dt
    lam = -config.nu * grid.k_squared  # viscous symbol, exact factor below
    e_half = np.exp(lam * (dt / 2.0))
    e_full = e_half * e_half

    coeffs = v0.coeffs.copy()
    times = [0.0]
    snapshots = [SpectralVelocityField(grid, coeffs)]

    def nl(c: np.ndarray, t: float) -> np.ndarray:
        return nonlinear(SpectralVelocityField(grid, c), t).coeffs

    t = 0.0
    for step in range(1, config.n_steps + 1):
        a = dt * nl(coeffs, t)
        b = dt * nl(e_half * (coeffs + 0.5 * a), t + dt / 2.0)
        c = dt * nl(e_half * coeffs + 0.5 * b, t + dt / 2.0)
        d = dt * nl(e_full * coeffs + e_half * c, t + dt)
        coeffs = e_full * coeffs + (e_full * a + 2.0 * e_half * (b + c) + d) / 6.0
        t = step * dt
        if not np.all(np.isfinite(coeffs)):
            raise BlowUpError(t)
        if step % config.snapshot_stride == 0 or step == config.n_steps:
            times.append(t)
            snapshots.append(SpectralVelocityField(grid, coeffs))

    return Trajectory(np.array(times), snapshots, config)


# ---------------------------------------------------------------------------
# energy balance
# ---------------------------------------------------------------------------

def cumulative_trapezoid(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Running trapezoid integral with I[0] = 0.

    All residual assemblies share this helper so that identities between
    differently-phrased checks hold at the floating-point level.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    increments = 0.5 * (values[1:] + values[:-1]) * np.diff(times)
    np.cumsum(increments, out=out[1:])
    return out


@dataclass(frozen=True)
class EnergyBalance:
    """Snapshot-wise kinetic energy balance bookkeeping for one trajectory."""

    times: np.ndarray
    kinetic: np.ndarray
    dissipation_rate: np.ndarray  # nu ||grad v||^2
    work_rate: np.ndarray  # <f, v>
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "cumulative",
            cumulative_trapezoid(self.times, self.dissipation_rate - self.work_rate),
        )

    def residual(self, i_s: int, i_t: int) -> float:
        """1/2||v(t)||^2 - 1/2||v(s)||^2 + int_s^t (nu||grad v||^2 - <f,v>)."""
        return float(
            self.kinetic[i_t] - self.kinetic[i_s] + self.cumulative[i_t] - self.cumulative[i_s]
        )

    def per_interval_residuals(self) -> np.ndarray:
        return np.array([self.residual(i, i + 1) for i in range(len(self.times) - 1)])

    def total_drift(self) -> float:
        return self.residual(0, len(self.times) - 1)


def energy_balance(traj: Trajectory, nu: float, forcing: Forcing | None) -> EnergyBalance:
    kinetic = np.empty(len(traj))
    dissipation = np.empty(len(traj))
    work = np.empty(len(traj))
    for i, (t, f) in enumerate(zip(traj.times, traj.fields)):
        kinetic[i] = f.energy()
        dissipation[i] = nu * f.norm_h1_semi() ** 2
        work[i] = forcing.velocity(t).inner(f) if forcing is not None else 0.0
    return EnergyBalance(traj.times.copy(), kinetic, dissipation, work)


def energy_balance_residual(traj: Trajectory, config: SolverConfig) -> np.ndarray:
    """Signed per-interval residuals of the discrete energy identity."""
    return energy_balance(traj, config.nu, config.forcing).per_interval_residuals()


# ---------------------------------------------------------------------------
# linear Stokes recovery
# ---------------------------------------------------------------------------

def stokes_recovery(
    delta_f: Forcing | None,
    delta_v0: SpectralVelocityField,
    nu: float,
    times: np.ndarray,
    cutoff: int | None = None,
) -> Trajectory:
    """Solve d/dt vbar - nu Lap vbar = P delta_f, vbar(0) = P delta_v0.

    The heat part is diagonal on the torus and integrated exactly; with a
    forcing difference present the quadrature runs on a fine sub-grid of the
    requested snapshot times so the result stays linear in the data. For
    nu = 0 this reduces to vbar(t) = vbar(0) + int_0^t P delta_f ds.
    """
    grid = delta_v0.grid
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise UsageError("recovery snapshots must start at t=0")
    cutoff = cutoff if cutoff is not None else grid.dealias_cutoff
    v0 = galerkin_project(leray_project(delta_v0), cutoff)

    if delta_f is None:
        fields = [
            SpectralVelocityField(grid, np.exp(-nu * grid.k_squared * t) * v0.coeffs)
            for t in times
        ]
        return Trajectory(times.copy(), fields)

    # exact factor + RK4 on the forcing term, stepping between snapshots
    config = SolverConfig(
        grid=grid,
        nu=nu,
        dt=float(np.min(np.diff(times))),
        t_final=float(times[-1]),
        cutoff=cutoff,
        initial_condition=v0,
        forcing=delta_f,
        override_stability=True,
    )
    forced = integrate(
        config,
        nonlinear=lambda u, t: galerkin_project(leray_project(delta_f.velocity(t)), cutoff),
    )
    fields = [forced.field_at(t) for t in times]
    return Trajectory(times.copy(), fields)
