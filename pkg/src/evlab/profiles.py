"""Compactly supported C^1 time profiles and product quadrature.

Profiles are built from the cubic smoothstep s(u) = u^2 (3 - 2u), giving
nonnegative bumps / plateaus with exact compact support and analytic
derivatives. ``integrate_profile`` integrates profile(t) * h(t) where h is
the piecewise-linear interpolant of snapshot data: each snapshot interval is
split at the profile's knots and handled by fixed Gauss-Legendre nodes, so
the quadrature is exact in the profile and second order in the data. That
keeps narrow ramps (below the snapshot spacing) meaningful, which the
indicator-approximation and mollifier-limit checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

# 4-point Gauss-Legendre on [-1, 1]: exact to polynomial degree 7, enough for
# (cubic ramp)^2 * linear data on knot-free subintervals.
_GAUSS_X = np.array([
    -0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526,
])
_GAUSS_W = np.array([
    0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538,
])


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_prime(u: np.ndarray) -> np.ndarray:
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


@dataclass(frozen=True)
class TimeProfile:
    """psi(t) = amplitude * up((t-a)/ramp) * down((b-t)/ramp) on [a, b].

    ``left_ramp=False`` drops the up-ramp so psi starts at full amplitude at
    t = a (used for test functions with psi(0) != 0).
    """

    a: float
    b: float
    ramp: float
    amplitude: float = 1.0
    left_ramp: bool = True

    def __post_init__(self):
        if self.b <= self.a:
            raise UsageError("profile needs a < b")
        if self.ramp <= 0 or self.ramp > (self.b - self.a):
            raise UsageError("ramp must lie in (0, b - a]")
        if self.amplitude < 0:
            raise UsageError("profile amplitude must be nonnegative (psi >= 0)")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    def knots(self) -> np.ndarray:
        ks = [self.a, self.b - self.ramp, self.b]
        if self.left_ramp:
            ks.append(self.a + self.ramp)
        return np.unique(ks)

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        up = _smoothstep((t - self.a) / self.ramp) if self.left_ramp else np.where(t >= self.a, 1.0, 0.0)
        down = _smoothstep((self.b - t) / self.ramp)
        return self.amplitude * up * down

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        down = _smoothstep((self.b - t) / self.ramp)
        ddown = -_smoothstep_prime((self.b - t) / self.ramp) / self.ramp
        if self.left_ramp:
            up = _smoothstep((t - self.a) / self.ramp)
            dup = _smoothstep_prime((t - self.a) / self.ramp) / self.ramp
        else:
            up = np.where(t >= self.a, 1.0, 0.0)
            dup = np.zeros_like(t)
        return self.amplitude * (dup * down + up * ddown)

    def max_value(self) -> float:
        return float(np.max(self.value(np.linspace(self.a, self.b, 257))))

    def max_derivative(self) -> float:
        return float(np.max(np.abs(self.derivative(np.linspace(self.a, self.b, 1025)))))

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "ramp": self.ramp,
            "amplitude": self.amplitude, "left_ramp": self.left_ramp,
        }


def bump(center: float, width: float, amplitude: float = 1.0) -> TimeProfile:
    """Symmetric bump supported on [center - width/2, center + width/2]."""
    half = width / 2.0
    return TimeProfile(center - half, center + half, ramp=half, amplitude=amplitude)


def plateau(s: float, t: float, ramp: float, amplitude: float = 1.0) -> TimeProfile:
    """Smoothed indicator of [s, t]: ramps sit just inside the interval."""
    return TimeProfile(s, t, ramp=ramp, amplitude=amplitude)


def initial_ramp_down(t_off: float, ramp: float) -> TimeProfile:
    """psi with psi(0) = 1, constant until t_off - ramp, zero from t_off on."""
    return TimeProfile(0.0, t_off, ramp=ramp, left_ramp=False)


def integrate_profile(
    profile: TimeProfile,
    times: np.ndarray,
    samples: np.ndarray,
    derivative: bool = False,
) -> float:
    """int psi(t) h(t) dt (or psi'(t) h(t)) with h piecewise linear in the data."""
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples, dtype=float)
    lo, hi = profile.support
    if lo < times[0] - 1e-12 or hi > times[-1] + 1e-12:
        raise UsageError("profile support exceeds the sampled time range")
    fn = profile.derivative if derivative else profile.value

    total = 0.0
    knots = profile.knots()
    for i in range(len(times) - 1):
        t0, t1 = times[i], times[i + 1]
        if t1 <= lo or t0 >= hi:
            continue
        edges = [max(t0, lo), min(t1, hi)]
        for k in knots:
            if edges[0] < k < edges[-1]:
                edges.insert(-1, k)
        edges = np.unique(edges)
        h0, slope = samples[i], (samples[i + 1] - samples[i]) / (t1 - t0)
        for aa, bb in zip(edges[:-1], edges[1:]):
            half = 0.5 * (bb - aa)
            mid = 0.5 * (aa + bb)
            nodes = mid + half * _GAUSS_X
            data = h0 + slope * (nodes - t0)
            total += half * float(np.dot(_GAUSS_W, fn(nodes) * data))
    return total
