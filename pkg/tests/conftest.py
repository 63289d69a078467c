import numpy as np
import pytest

from evlab import certificates, solver, spectral
from evlab.spectral import GridSpec


@pytest.fixture(scope="session")
def grid32():
    return GridSpec(dim=2, n=32)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(dim=2, n=16)


@pytest.fixture(scope="session")
def grid16_3d():
    return GridSpec(dim=3, n=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def run_config(grid, nu=0.1, dt=1e-3, t_final=1.0, cutoff=None, ic=None,
               stride=1, **kw):
    if ic is None:
        ic = spectral.taylor_green_field(grid)
    if cutoff is None:
        cutoff = grid.dealias_cutoff
    return solver.SolverConfig(
        grid=grid, nu=nu, dt=dt, t_final=t_final, cutoff=cutoff,
        initial_condition=ic, snapshot_stride=stride, **kw
    )


@pytest.fixture(scope="session")
def tg_candidate(grid32):
    """Resolved Taylor-Green candidate: nu=0.1, T=1, dt=1e-3, stride 5."""
    traj = solver.integrate(run_config(grid32, stride=5, ic_spec="taylor-green"))
    return certificates.build_energy_trace(traj, label="tg-resolved")


@pytest.fixture(scope="session")
def turb_run(grid32):
    """Random band-limited IC run with active nonlinearity (for defects)."""
    ic = spectral.random_solenoidal_field(grid32, 4, 2024, amplitude=1.5)
    cfg = run_config(grid32, nu=0.02, dt=1e-3, t_final=0.5, stride=5, ic=ic,
                     ic_spec="random:seed=2024,kmax=4,amp=1.5")
    return solver.integrate(cfg)


@pytest.fixture(scope="session")
def coarse_candidate(turb_run):
    return certificates.synthesize_defect_candidate(turb_run, 4)
