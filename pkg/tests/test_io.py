"""EVF1 snapshot format, config files, trajectory directories, trace CSV."""

import struct

import numpy as np
import pytest

from evlab import io, spectral
from evlab.errors import FormatError
from evlab.solver import integrate
from evlab.spectral import GridSpec

from test_solver import make_config


def test_snapshot_round_trip(tmp_path, grid16):
    f = spectral.random_solenoidal_field(grid16, 5, 9)
    path = tmp_path / "f.evf"
    io.write_snapshot(path, f, viscosity=0.25, time=1.5)
    back, nu, t = io.read_snapshot(path)
    assert nu == 0.25 and t == 1.5
    assert (back - f).norm_l2() < 1e-12 * f.norm_l2()


def test_snapshot_layout_is_component_major_x_fastest(tmp_path):
    grid = GridSpec(dim=2, n=4)
    vals = np.zeros((2, 4, 4))
    vals[0] = np.arange(16).reshape(4, 4)  # vals[0][ix, iy] = 4*ix + iy
    phys = spectral.PhysicalVelocityField(grid, vals)
    path = tmp_path / "f.evf"
    io.write_snapshot(path, spectral.to_spectral(phys), 0.0, 0.0)
    raw = path.read_bytes()
    header = struct.unpack_from("<4sIIdd", raw)
    assert header[0] == b"EVF1" and header[1] == 2 and header[2] == 4
    payload = np.frombuffer(raw, dtype="<f8", offset=28)
    # x fastest: first 4 entries are vals[0][0..3, 0] = 0, 4, 8, 12
    assert np.allclose(payload[:4], [0, 4, 8, 12])
    # second component all zero, stored after the full first component
    assert np.allclose(payload[16:], 0.0)


def test_snapshot_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.evf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FormatError, match="magic"):
        io.read_snapshot(path)


def test_snapshot_rejects_odd_n(tmp_path):
    path = tmp_path / "odd.evf"
    path.write_bytes(struct.pack("<4sIIdd", b"EVF1", 2, 5, 0.0, 0.0) + b"\x00" * 400)
    with pytest.raises(FormatError, match="even"):
        io.read_snapshot(path)


def test_snapshot_rejects_truncation(tmp_path, grid16):
    f = spectral.zero_field(grid16)
    path = tmp_path / "t.evf"
    io.write_snapshot(path, f, 0.0, 0.0)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(FormatError, match="expected"):
        io.read_snapshot(path)


def test_config_parse_round_trip():
    text = """
# an example run
nu = 0.1
dt = 1e-3
t_final = 0.5
grid_n = 16
galerkin_cutoff = 5
ic = taylor-green
forcing = zero
integrator = if-rk4
snapshot_stride = 10
"""
    cfg = io.config_from_entries(io.parse_config_text(text))
    assert cfg.nu == 0.1 and cfg.cutoff == 5 and cfg.snapshot_stride == 10
    assert cfg.grid.n == 16 and cfg.grid.dim == 2
    assert cfg.initial_condition.energy() == pytest.approx(np.pi**2, rel=1e-12)


def test_config_rejects_unknown_key():
    with pytest.raises(FormatError, match="unknown key"):
        io.parse_config_text("nu=0.1\nturbo=yes\n")


def test_config_rejects_missing_key():
    with pytest.raises(FormatError, match="missing"):
        io.config_from_entries(io.parse_config_text("nu=0.1\n"))


def test_trajectory_round_trip(tmp_path, grid16):
    cfg = make_config(grid16, nu=0.2, dt=1e-2, t_final=0.1, cutoff=5, ic_spec="taylor-green")
    traj = integrate(cfg)
    outdir = io.write_trajectory(tmp_path / "run", traj)
    back = io.load_trajectory(outdir)
    assert np.allclose(back.times, traj.times)
    assert back.config.nu == cfg.nu
    for a, b in zip(back.fields, traj.fields):
        assert (a - b).norm_l2() < 1e-12


def test_load_trajectory_missing_manifest(tmp_path):
    with pytest.raises(FormatError, match="manifest"):
        io.load_trajectory(tmp_path)


def test_trace_csv_round_trip(tmp_path):
    times = np.linspace(0, 1, 5)
    e = np.array([1.0, 0.9, 0.8, 0.7, 0.6])
    path = tmp_path / "trace.csv"
    io.write_trace_csv(path, times, e, e, 0 * e, e / 10, 0 * e)
    data = io.read_trace_csv(path)
    assert np.array_equal(data["E"], e)
    assert data["t"][-1] == 1.0
    # 17 significant digits survive a round trip exactly
    assert path.read_text().splitlines()[1].startswith("0,1,1,0,")


def test_trace_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("time,energy\n0,1\n")
    with pytest.raises(FormatError, match="header"):
        io.read_trace_csv(path)
