"""Time profiles: support, nonnegativity, and exact product quadrature."""

import numpy as np
import pytest

from evlab import profiles
from evlab.errors import UsageError
from evlab.profiles import TimeProfile, bump, initial_ramp_down, integrate_profile, plateau


def test_bump_support_and_nonnegativity():
    psi = bump(0.5, 0.4)
    ts = np.linspace(0, 1, 1001)
    vals = psi.value(ts)
    assert np.all(vals >= 0)
    assert np.all(vals[(ts < 0.3) | (ts > 0.7)] == 0.0)
    assert psi.value(0.5) == pytest.approx(1.0)


def test_plateau_flat_in_the_middle():
    psi = plateau(0.2, 0.8, ramp=0.1)
    ts = np.linspace(0.3, 0.7, 101)
    assert np.allclose(psi.value(ts), 1.0)
    assert psi.value(0.2) == 0.0 and psi.value(0.8) == 0.0


def test_derivative_matches_finite_difference():
    psi = plateau(0.1, 0.9, ramp=0.25)
    ts = np.linspace(0.0, 1.0, 37)
    h = 1e-7
    fd = (psi.value(ts + h) - psi.value(ts - h)) / (2 * h)
    assert np.max(np.abs(fd - psi.derivative(ts))) < 1e-5


def test_initial_ramp_down():
    psi = initial_ramp_down(0.6, ramp=0.3)
    assert psi.value(0.0) == 1.0
    assert psi.value(0.2) == 1.0
    assert psi.value(0.61) == 0.0
    assert psi.derivative(0.1) == 0.0


def test_rejects_bad_parameters():
    with pytest.raises(UsageError):
        TimeProfile(0.5, 0.4, ramp=0.1)
    with pytest.raises(UsageError):
        TimeProfile(0.0, 1.0, ramp=2.0)
    with pytest.raises(UsageError):
        TimeProfile(0.0, 1.0, ramp=0.5, amplitude=-1.0)


def test_quadrature_exact_for_linear_data():
    # int psi' * (alpha + beta t) = [psi h] - int psi beta = -beta int psi
    psi = plateau(0.2, 0.8, ramp=0.2)
    times = np.linspace(0, 1, 11)  # knots do NOT align with samples
    alpha, beta = 0.7, -1.3
    data = alpha + beta * times
    lhs = integrate_profile(psi, times, data, derivative=True)
    int_psi = integrate_profile(psi, times, np.ones_like(times))
    assert lhs == pytest.approx(-beta * int_psi, rel=1e-12)
    # and int psi * const = const * int psi with the analytic value:
    # two smoothstep ramps of width 0.2 contribute 0.2 each on average 1/2
    assert int_psi == pytest.approx(0.6 - 0.2, rel=1e-12)


def test_quadrature_sharp_ramps_below_sample_spacing():
    # ramps narrower than the sampling interval still integrate exactly:
    # -int psi' h -> h(s) - h(t) pattern for the indicator-like profile
    psi = plateau(0.3, 0.7, ramp=0.01)
    times = np.linspace(0, 1, 11)
    data = np.linspace(2.0, 3.0, 11)  # h(t) = 2 + t
    val = -integrate_profile(psi, times, data, derivative=True)
    # -int psi' h = h(ramp-up mass) ... = approx h(t=0.7) - h(t=0.3)
    assert val == pytest.approx((2 + 0.7) - (2 + 0.3), abs=2e-2)


def test_support_outside_samples_rejected():
    psi = bump(0.5, 0.4)
    with pytest.raises(UsageError):
        integrate_profile(psi, np.linspace(0.4, 1.0, 5), np.ones(5))


def test_gauss_quadrature_matches_dense_trapezoid():
    psi = bump(0.45, 0.5)
    times = np.linspace(0, 1, 21)
    rng = np.random.default_rng(5)
    data = rng.standard_normal(21)
    exact = integrate_profile(psi, times, data)
    # dense trapezoid on the piecewise-linear interpolant converges to it
    ts = np.linspace(0, 1, 200001)
    interp = np.interp(ts, times, data)
    dense = np.sum(0.5 * (psi.value(ts[1:]) * interp[1:] + psi.value(ts[:-1]) * interp[:-1])
                   * np.diff(ts))
    assert exact == pytest.approx(dense, rel=1e-8)
