"""On-disk formats: EVF1 field snapshots, trajectory directories, flat
key=value config files, trace CSV, and JSON reports.

EVF1 snapshot layout (little-endian):

    bytes 0..3    magic "EVF1"
    u32           dim
    u32           n_per_dim (must be even)
    f64           viscosity
    f64           time
    d * N^d f64   physical collocation values, component-major,
                  x-fastest row-major within a component

A trajectory directory holds ``manifest.json``, one ``snap_*.evf`` per stored
time, and optionally ``trace.csv`` (written by the certificate layer).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import spectral, testfields
from .errors import ConfigurationError, FormatError, UsageError
from .solver import SolverConfig, Trajectory
from .spectral import GridSpec, PhysicalVelocityField, SpectralVelocityField

EVF_MAGIC = b"EVF1"
_HEADER = struct.Struct("<4sIIdd")
MANIFEST_FORMAT = "EVT1"
MANIFEST_VERSION = 1
TRACE_HEADER = "t,E,kinetic,xi,dissipation_rate,work_rate"

CONFIG_KEYS = {
    "nu", "dt", "t_final", "grid_n", "galerkin_cutoff", "ic", "forcing",
    "integrator", "snapshot_stride", "grid_dim",
}


# ---------------------------------------------------------------------------
# EVF1 snapshots
# ---------------------------------------------------------------------------

def write_snapshot(path, field: SpectralVelocityField, viscosity: float, time: float) -> None:
    grid = field.grid
    values = spectral.to_physical(field).values
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EVF_MAGIC, grid.dim, grid.n, viscosity, time))
        for c in range(grid.dim):
            # x-fastest: the first spatial axis varies fastest on disk
            fh.write(np.asarray(values[c], dtype="<f8").flatten(order="F").tobytes())


def read_snapshot(path) -> tuple[SpectralVelocityField, float, float]:
    """Read one EVF1 file; returns (field, viscosity, time)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, dim, n, viscosity, time = _HEADER.unpack_from(raw)
    if magic != EVF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if n % 2 != 0:
        raise FormatError(f"{path}: n_per_dim={n} is not even")
    try:
        grid = GridSpec(dim=dim, n=n)
    except ConfigurationError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    count = dim * n**dim
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if payload.size != count:
        raise FormatError(f"{path}: expected {count} values, found {payload.size}")
    values = np.empty((dim,) + grid.shape)
    per = n**dim
    for c in range(dim):
        values[c] = payload[c * per : (c + 1) * per].reshape(grid.shape, order="F")
    return spectral.to_spectral(PhysicalVelocityField(grid, values)), viscosity, time


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Parse the flat key=value run configuration format."""
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FormatError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        if key in entries:
            raise FormatError(f"config line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def config_from_entries(entries: dict) -> SolverConfig:
    try:
        dim = int(entries.get("grid_dim", 2))
        n = int(entries["grid_n"])
        nu = float(entries["nu"])
        dt = float(entries["dt"])
        t_final = float(entries["t_final"])
        cutoff = int(entries["galerkin_cutoff"])
        stride = int(entries.get("snapshot_stride", 1))
    except KeyError as exc:
        raise FormatError(f"config missing required key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise FormatError(f"config value error: {exc}") from exc
    grid = GridSpec(dim=dim, n=n)
    ic_spec = entries.get("ic", "taylor-green")
    forcing_spec = entries.get("forcing", "zero")
    ic = testfields.catalogue_entry(grid, ic_spec, nu=nu).velocity(0.0)
    forcing_field = None
    if forcing_spec not in ("zero", "none", ""):
        forcing_field = testfields.catalogue_entry(grid, forcing_spec, nu=nu)
        testfields.validate_divergence_free(forcing_field)
    return SolverConfig(
        grid=grid,
        nu=nu,
        dt=dt,
        t_final=t_final,
        cutoff=cutoff,
        initial_condition=ic,
        forcing=forcing_field,
        integrator=entries.get("integrator", "if-rk4"),
        snapshot_stride=stride,
        ic_spec=ic_spec,
        forcing_spec=forcing_spec,
    )


def load_config(path) -> SolverConfig:
    return config_from_entries(parse_config_text(Path(path).read_text()))


# ---------------------------------------------------------------------------
# trajectory directories
# ---------------------------------------------------------------------------

def write_trajectory(outdir, traj: Trajectory, caveats: list[str] | None = None) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    config = traj.config
    if config is None:
        raise UsageError("trajectory has no config provenance to serialize")
    names = []
    for i, (t, f) in enumerate(zip(traj.times, traj.fields)):
        name = f"snap_{i:06d}.evf"
        write_snapshot(outdir / name, f, config.nu, float(t))
        names.append(name)
    manifest = {
        "format": MANIFEST_FORMAT,
        "format_version": MANIFEST_VERSION,
        "snapshot_format": "EVF1",
        "config": config.to_dict(),
        "snapshot_times": [float(t) for t in traj.times],
        "snapshots": names,
        "caveats": caveats or [],
    }
    write_json(outdir / "manifest.json", manifest)
    return outdir


def load_trajectory(indir) -> Trajectory:
    indir = Path(indir)
    manifest_path = indir / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{indir}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path}: unknown format {manifest.get('format')!r}")
    entries = manifest["config"]
    config = config_from_entries(
        {k: str(v) for k, v in entries.items() if k in CONFIG_KEYS}
    )
    fields = []
    times = []
    for name, t_manifest in zip(manifest["snapshots"], manifest["snapshot_times"]):
        field, _, t = read_snapshot(indir / name)
        if field.grid != config.grid:
            raise FormatError(f"{indir / name}: grid does not match manifest config")
        if abs(t - t_manifest) > 1e-9:
            raise FormatError(f"{indir / name}: snapshot time {t} != manifest {t_manifest}")
        fields.append(field)
        times.append(t)
    return Trajectory(np.array(times), fields, config)


# ---------------------------------------------------------------------------
# trace CSV and JSON reports
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_trace_csv(path, times, total, kinetic, xi, dissipation_rate, work_rate) -> None:
    lines = [TRACE_HEADER]
    for row in zip(times, total, kinetic, xi, dissipation_rate, work_rate):
        lines.append(",".join(format_float(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path):
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise FormatError(f"{path}: bad trace header")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    if data.ndim != 2 or data.shape[1] != 6:
        raise FormatError(f"{path}: expected 6 columns")
    return {
        "t": data[:, 0],
        "E": data[:, 1],
        "kinetic": data[:, 2],
        "xi": data[:, 3],
        "dissipation_rate": data[:, 4],
        "work_rate": data[:, 5],
    }


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
