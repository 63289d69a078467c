"""Galerkin solver oracles: exact linear decay, Taylor-Green, energy balance,
spectral truncation consistency, and the linear Stokes recovery."""

import numpy as np
import pytest

from evlab import solver, spectral, testfields
from evlab.errors import BlowUpError, ConfigurationError, UsageError
from evlab.solver import SolverConfig, Trajectory, integrate, semidiscrete_rhs, stokes_recovery
from evlab.spectral import GridSpec, single_mode_field, taylor_green_field

PI = np.pi


def make_config(grid, nu=0.1, dt=1e-3, t_final=1.0, cutoff=None, ic=None, **kw):
    if ic is None:
        ic = taylor_green_field(grid)
    if cutoff is None:
        cutoff = grid.dealias_cutoff
    return SolverConfig(
        grid=grid, nu=nu, dt=dt, t_final=t_final, cutoff=cutoff, initial_condition=ic, **kw
    )


@pytest.fixture(scope="module")
def tg_run(grid32):
    """Resolved Taylor-Green run, nu=0.1, T=1, dt=1e-3 (shared, expensive)."""
    return integrate(make_config(grid32))


class TestConfig:
    def test_rejects_negative_viscosity(self, grid16):
        with pytest.raises(ConfigurationError):
            make_config(grid16, nu=-1.0)

    def test_rejects_cutoff_beyond_dealias(self, grid16):
        with pytest.raises(ConfigurationError):
            make_config(grid16, cutoff=6)  # floor(16/3) = 5

    def test_stability_number_reported(self, grid16):
        cfg = make_config(grid16, nu=0.2, dt=1e-2)
        assert cfg.viscous_stability_number == pytest.approx(1e-2 * 0.2 * 2 * 2 * 64)


class TestSemidiscreteRhs:
    def test_single_mode_is_pure_decay(self, grid32):
        f = single_mode_field(grid32, [2, 1])
        cfg = make_config(grid32, nu=0.3, ic=f)
        rhs = semidiscrete_rhs(f, 0.0, cfg)
        expected = -0.3 * 5.0 * f  # |k|^2 = 5
        assert (rhs - expected).norm_l2() < 1e-13 * f.norm_l2()

    def test_zero_field_gives_projected_forcing(self, grid32):
        forcing = testfields.single_mode(grid32, [1, 1])
        cfg = make_config(grid32, nu=0.1, forcing=forcing)
        rhs = semidiscrete_rhs(spectral.zero_field(grid32), 0.4, cfg)
        assert (rhs - forcing.velocity(0.4)).norm_l2() < 1e-13

    def test_taylor_green_is_laplacian_eigenfield(self, grid32):
        v = taylor_green_field(grid32)
        cfg = make_config(grid32, nu=0.25)
        rhs = semidiscrete_rhs(v, 0.0, cfg)
        assert (rhs + 2 * 0.25 * v).norm_l2() < 1e-12 * v.norm_l2()


class TestIntegrate:
    def test_single_mode_exact_decay(self, grid32):
        nu, ksq = 0.4, 5.0
        ic = single_mode_field(grid32, [2, 1])
        traj = integrate(make_config(grid32, nu=nu, dt=1e-2, t_final=1.0, ic=ic))
        final = traj.fields[-1]
        exact = np.exp(-nu * ksq * 1.0) * ic
        assert (final - exact).norm_l2() < 1e-10 * ic.norm_l2()

    def test_taylor_green_oracle(self, tg_run, grid32):
        # v(t) = exp(-2 nu t) * IC is the exact solution
        ic = taylor_green_field(grid32)
        errs = []
        for t, f in zip(tg_run.times[::100], tg_run.fields[::100]):
            exact = np.exp(-2 * 0.1 * t) * ic
            errs.append((f - exact).norm_l2())
        assert max(errs) < 1e-9

    def test_kinetic_energy_tracks_analytic_law(self, tg_run):
        kin = tg_run.kinetic_energies()
        exact = PI**2 * np.exp(-4 * 0.1 * tg_run.times)
        assert np.max(np.abs(kin - exact)) < 1e-9

    def test_snapshots_divergence_free(self, tg_run):
        assert tg_run.max_divergence() < 1e-10

    def test_euler_energy_conservation(self, grid32):
        ic = spectral.random_solenoidal_field(grid32, 5, 42)
        traj = integrate(make_config(grid32, nu=0.0, dt=1e-3, t_final=1.0, ic=ic,
                                     snapshot_stride=100))
        kin = traj.kinetic_energies()
        assert np.max(np.abs(kin - kin[0])) < 1e-10

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blowup_detection(self, grid16):
        # gigantic amplitude + inviscid + big dt overflows quickly
        ic = 1e8 * spectral.random_solenoidal_field(grid16, 5, 3)
        cfg = make_config(grid16, nu=0.0, dt=0.5, t_final=5.0, ic=ic,
                          override_stability=True)
        with pytest.raises(BlowUpError) as err:
            integrate(cfg)
        assert err.value.time > 0

    def test_stability_guard(self, grid16):
        ic = 1e4 * spectral.random_solenoidal_field(grid16, 5, 3)
        with pytest.raises(UsageError):
            integrate(make_config(grid16, dt=0.5, t_final=1.0, ic=ic))

    def test_galerkin_truncation_consistency(self, grid32):
        # || v^(n)(T) - v^(2n)(T) || decreases in n for smooth data
        ic = spectral.random_solenoidal_field(grid32, 4, 7)
        finals = {}
        for n in (4, 8, 10):
            traj = integrate(make_config(grid32, nu=0.05, dt=2e-3, t_final=0.5,
                                         cutoff=n, ic=ic, snapshot_stride=250))
            finals[n] = traj.fields[-1]
        d48 = (finals[4] - finals[8]).norm_l2()
        d810 = (finals[8] - finals[10]).norm_l2()
        assert d810 < d48


class TestEnergyBalance:
    def test_inviscid_unforced_drift(self, grid32):
        ic = spectral.random_solenoidal_field(grid32, 5, 42)
        cfg = make_config(grid32, nu=0.0, dt=1e-3, t_final=1.0, ic=ic, snapshot_stride=10)
        traj = integrate(cfg)
        bal = solver.energy_balance(traj, 0.0, None)
        assert abs(bal.total_drift()) < 1e-10

    def test_taylor_green_balance_matches_analytic_identities(self, tg_run):
        # dE/dt = -nu ||grad v||^2 with E = pi^2 e^{-4 nu t}, ||grad v||^2 = 4 pi^2 e^{-4 nu t}
        bal = solver.energy_balance(tg_run, 0.1, None)
        exact_E = PI**2 * np.exp(-4 * 0.1 * tg_run.times)
        exact_diss = 4 * 0.1 * PI**2 * np.exp(-4 * 0.1 * tg_run.times)
        assert np.max(np.abs(bal.kinetic - exact_E)) < 1e-9
        assert np.max(np.abs(bal.dissipation_rate - exact_diss)) < 1e-8
        res = bal.per_interval_residuals()
        assert np.max(np.abs(res)) < 1e-10

    def test_residual_shrinks_at_rk4_rate_with_dt(self, grid32):
        # halving dt shrinks the per-step residual ~16x (trapezoid is the
        # leading error here: ~8x floor; accept anything >= 6x)
        ic = spectral.random_solenoidal_field(grid32, 5, 11)
        maxres = {}
        for dt in (4e-3, 2e-3):
            cfg = make_config(grid32, nu=0.1, dt=dt, t_final=0.2, ic=ic)
            res = solver.energy_balance_residual(integrate(cfg), cfg)
            maxres[dt] = np.max(np.abs(res))
        assert maxres[2e-3] < maxres[4e-3] / 6.0


class TestStokesRecovery:
    def test_zero_inputs_zero_output(self, grid16):
        times = np.linspace(0, 1, 11)
        traj = stokes_recovery(None, spectral.zero_field(grid16), 0.3, times)
        assert all(f.norm_l2() == 0.0 for f in traj.fields)

    def test_single_mode_exact_decay(self, grid32):
        ic = single_mode_field(grid32, [1, 2])
        times = np.linspace(0, 1, 21)
        traj = stokes_recovery(None, ic, 0.2, times)
        for t, f in zip(times, traj.fields):
            exact = np.exp(-0.2 * 5.0 * t) * ic
            assert (f - exact).norm_l2() < 1e-13

    def test_linearity(self, grid16):
        times = np.linspace(0, 0.5, 6)
        dv = spectral.random_solenoidal_field(grid16, 4, 5)
        df = testfields.single_mode(grid16, [1, 1])
        full = stokes_recovery(df, dv, 0.1, times)
        half = stokes_recovery(df, 0.5 * dv, 0.1, times, cutoff=full.config.cutoff
                               if full.config else None)
        # halving delta_v0 does not halve the forced response; check additivity
        # instead: recovery(f, v) = recovery(f, 0) + recovery(0, v)
        f_only = stokes_recovery(df, spectral.zero_field(grid16), 0.1, times)
        v_only = stokes_recovery(None, dv, 0.1, times)
        for a, b, c in zip(full.fields, f_only.fields, v_only.fields):
            assert (a - (b + c)).norm_l2() < 1e-12
        del half

    def test_scaling_linearity(self, grid16):
        times = np.linspace(0, 0.5, 6)
        dv = spectral.random_solenoidal_field(grid16, 4, 5)
        one = stokes_recovery(None, dv, 0.1, times)
        half = stokes_recovery(None, 0.5 * dv, 0.1, times)
        for a, b in zip(one.fields, half.fields):
            assert (0.5 * a - b).norm_l2() < 1e-14

    def test_nu_zero_accumulates_forcing(self, grid16):
        # vbar(t) = vbar0 + int_0^t P f: steady forcing accumulates linearly
        df = testfields.single_mode(grid16, [1, 0])
        times = np.linspace(0, 1, 11)
        traj = stokes_recovery(df, spectral.zero_field(grid16), 0.0, times)
        f0 = df.velocity(0.0)
        for t, f in zip(times, traj.fields):
            assert (f - t * f0).norm_l2() < 1e-12


class TestTrajectory:
    def test_strictly_increasing_times_enforced(self, grid16):
        z = spectral.zero_field(grid16)
        with pytest.raises(ConfigurationError):
            Trajectory(np.array([0.0, 0.0]), [z, z])

    def test_index_and_restrict(self, tg_run):
        i = tg_run.index_of(0.5)
        assert tg_run.times[i] == pytest.approx(0.5)
        tail = tg_run.restrict(0.5)
        assert tail.times[0] == pytest.approx(0.5)
        assert len(tail) == len(tg_run) - i
        with pytest.raises(UsageError):
            tg_run.index_of(0.50041)
