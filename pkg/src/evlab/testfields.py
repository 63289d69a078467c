"""Smooth divergence-free test fields with exact evaluators.

A :class:`TestField` bundles a time-dependent solenoidal field with evaluators
for its value, gradient, symmetric gradient, time derivative and Laplacian.
Spatial derivatives are obtained by exact Fourier differentiation of the
field's coefficients (exact for the band-limited catalogue below); the time
derivative comes from the field's own closed form.

The shipped catalogue replaces the dense family of smooth test functions in
the certificate definitions by a finite representative set: zero, constants,
the decaying Taylor-Green vortex, single wavevector modes, and band-limited
random fields.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import spectral
from .errors import UsageError
from .spectral import GridSpec, SpectralVelocityField


class TestField:
    """Time-dependent solenoidal field with value/derivative evaluators.

    ``kind`` is "analytic-formula" for closed-form catalogue entries and
    "spectral-time-series" for fields backed by stored solver snapshots.
    """

    def __init__(
        self,
        grid: GridSpec,
        label: str,
        coeff_fn: Callable[[float], np.ndarray],
        dt_coeff_fn: Callable[[float], np.ndarray] | None = None,
        steady: bool = False,
        kind: str = "analytic-formula",
    ):
        self.grid = grid
        self.label = label
        self.kind = kind
        self.steady = steady
        self._coeff_fn = coeff_fn
        self._dt_coeff_fn = dt_coeff_fn
        self._steady_cache: SpectralVelocityField | None = None

    def __repr__(self):
        return f"TestField({self.label!r}, kind={self.kind!r})"

    def velocity(self, t: float) -> SpectralVelocityField:
        if self.steady:
            if self._steady_cache is None:
                self._steady_cache = SpectralVelocityField(self.grid, self._coeff_fn(0.0))
            return self._steady_cache
        return SpectralVelocityField(self.grid, self._coeff_fn(t))

    def time_derivative(self, t: float) -> SpectralVelocityField:
        if self.steady or self._dt_coeff_fn is None:
            return spectral.zero_field(self.grid)
        return SpectralVelocityField(self.grid, self._dt_coeff_fn(t))

    def gradient(self, t: float) -> np.ndarray:
        """Jacobian on the collocation grid, shape (d, d, n, ..., n)."""
        return self.velocity(t).gradient_physical()

    def symmetric_gradient(self, t: float) -> np.ndarray:
        return spectral.symmetric_gradient(self.velocity(t))

    def laplacian(self, t: float) -> SpectralVelocityField:
        return self.velocity(t).laplacian()

    def max_divergence(self, t: float = 0.0) -> float:
        return self.velocity(t).max_divergence()


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------

def zero(grid: GridSpec) -> TestField:
    z = spectral.zero_field(grid)
    return TestField(grid, "zero", lambda t: z.coeffs, steady=True)


def constant(grid: GridSpec, vector) -> TestField:
    f = spectral.constant_field(grid, vector)
    label = "constant(" + ",".join(f"{v:g}" for v in np.asarray(vector, dtype=float)) + ")"
    return TestField(grid, label, lambda t: f.coeffs, steady=True)


def single_mode(grid: GridSpec, k, amplitude=None) -> TestField:
    f = spectral.single_mode_field(grid, k, amplitude)
    label = "single-mode(" + ",".join(str(int(ki)) for ki in k) + ")"
    return TestField(grid, label, lambda t: f.coeffs, steady=True)


def taylor_green(grid: GridSpec, nu: float) -> TestField:
    """Decaying Taylor-Green vortex exp(-2 nu t) (sin x cos y, -cos x sin y).

    An exact solution of the incompressible system on the torus: its
    self-advection is a pure gradient, so the projected momentum residual
    vanishes.
    """
    base = spectral.taylor_green_field(grid).coeffs

    def coeff_fn(t: float) -> np.ndarray:
        return np.exp(-2.0 * nu * t) * base

    def dt_fn(t: float) -> np.ndarray:
        return -2.0 * nu * np.exp(-2.0 * nu * t) * base

    tf = TestField(grid, f"taylor-green(nu={nu:g})", coeff_fn, dt_fn, steady=(nu == 0.0))
    return tf


def random_band_limited(grid: GridSpec, kmax: int, seed: int, amplitude: float = 1.0) -> TestField:
    f = spectral.random_solenoidal_field(grid, kmax, seed, amplitude)
    return TestField(grid, f"random(kmax={kmax},seed={seed})", lambda t: f.coeffs, steady=True)


def steady_from_field(field: SpectralVelocityField, label: str) -> TestField:
    return TestField(field.grid, label, lambda t: field.coeffs, steady=True)


def time_shifted(tf: TestField, t0: float) -> TestField:
    """The field t -> tf(t + t0), used when restarting runs mid-interval."""
    if tf.steady:
        return tf
    dt_fn = None
    if tf._dt_coeff_fn is not None:
        dt_fn = lambda t: tf._dt_coeff_fn(t + t0)
    return TestField(
        tf.grid, f"{tf.label}@+{t0:g}", lambda t: tf._coeff_fn(t + t0), dt_fn,
        steady=False, kind=tf.kind,
    )


def standard_catalogue(grid: GridSpec, nu: float, cutoff: int | None = None) -> list[TestField]:
    """The default battery of comparison fields for certificate checks.

    All entries are band-limited inside ``cutoff`` (default: the dealias
    cutoff) so that certificates on Galerkin trajectories see no consistency
    error from truncating the test field.
    """
    kmax = min(cutoff if cutoff is not None else grid.dealias_cutoff, 4)
    fields = [
        zero(grid),
        constant(grid, [0.3, -0.2] if grid.dim == 2 else [0.3, -0.2, 0.1]),
        taylor_green(grid, nu),
        single_mode(grid, [1, 2] if grid.dim == 2 else [1, 2, 0]),
        random_band_limited(grid, kmax, seed=2021, amplitude=0.5),
    ]
    return fields


def catalogue_entry(grid: GridSpec, spec: str, nu: float = 0.0) -> TestField:
    """Resolve a catalogue string like ``taylor-green`` or ``single-mode:1,2``."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name in ("zero", "none"):
        return zero(grid)
    if name == "taylor-green":
        return taylor_green(grid, nu)
    if name == "constant":
        vec = [float(x) for x in arg.split(",")] if arg else [1.0] + [0.0] * (grid.dim - 1)
        return constant(grid, vec)
    if name == "single-mode":
        k = [int(x) for x in arg.split(",")] if arg else [1] + [0] * (grid.dim - 1)
        return single_mode(grid, k)
    if name == "random":
        kwargs = dict(kv.split("=") for kv in arg.split(",") if kv)
        return random_band_limited(
            grid,
            kmax=int(kwargs.get("kmax", 4)),
            seed=int(kwargs.get("seed", 0)),
            amplitude=float(kwargs.get("amp", 1.0)),
        )
    raise UsageError(f"unknown field spec {spec!r}")


# Forcing shares the TestField interface: a smooth divergence-free f(x, t).
Forcing = TestField


def validate_divergence_free(tf: TestField, t: float = 0.0, tol: float = 1e-10) -> None:
    v = tf.velocity(t)
    scale = max(v.norm_l2(), 1.0)
    if tf.max_divergence(t) > tol * scale:
        raise UsageError(f"field {tf.label!r} is not divergence-free")
