"""Energy traces, defect candidates, and weak-solution certificates.

A candidate is a trajectory together with an energy trace: total energy
E(t) = 1/2||v(t)||^2 + xi(t) with nonnegative defect xi. Resolved runs carry
xi = 0; coarse-graining a resolved run realizes xi as the energy of the
discarded modes, the constructive analogue of a weak-limit defect. Traces are
stored with the right-continuous (cadlag) representative; flagged jumps keep
both one-sided values for inspection.

"Almost every t" conditions from the underlying inequalities are evaluated at
every stored snapshot time; time integrals use the shared trapezoid helper so
that differently-phrased residuals agree at the floating-point level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import io, profiles, spectral
from .errors import IntegrityError, PreconditionError, UsageError
from .profiles import TimeProfile, integrate_profile
from .solver import SolverConfig, Trajectory, cumulative_trapezoid, energy_balance
from .spectral import SpectralVelocityField, galerkin_project
from .testfields import Forcing
from .weights import RegularityWeight

XI_SLACK = 1e-12


@dataclass(frozen=True)
class JumpRecord:
    """One flagged discontinuity of a trace, with both one-sided values."""

    index: int
    e_left: float
    xi_left: float
    e_right: float
    xi_right: float


@dataclass(frozen=True)
class EnergyTrace:
    """Sampled total energy E and defect xi on an increasing time grid."""

    times: np.ndarray
    total: np.ndarray
    xi: np.ndarray
    jumps: tuple[JumpRecord, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        total = np.asarray(self.total, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if not (len(times) == len(total) == len(xi)) or len(times) == 0:
            raise UsageError("trace arrays must be nonempty and aligned")
        if np.any(np.diff(times) <= 0):
            raise UsageError("trace times must be strictly increasing")
        if np.min(xi) < -XI_SLACK:
            raise IntegrityError(f"negative defect xi: min = {np.min(xi):.3e}")
        for rec in self.jumps:
            if not 0 <= rec.index < len(times):
                raise UsageError(f"jump index {rec.index} out of range")
        object.__setattr__(self, "times", spectral._freeze(times))
        object.__setattr__(self, "total", spectral._freeze(total))
        object.__setattr__(self, "xi", spectral._freeze(np.maximum(xi, 0.0)))

    def __len__(self):
        return len(self.times)

    @property
    def kinetic(self) -> np.ndarray:
        return self.total - self.xi

    def is_cadlag(self) -> bool:
        return all(
            self.total[r.index] == r.e_right and self.xi[r.index] == r.xi_right
            for r in self.jumps
        )


def total_variation(series) -> float:
    """sup over partitions of sum |E(t_k) - E(t_{k-1})|; on sampled data this
    is the sum of absolute consecutive increments."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise UsageError("total variation of an empty series")
    return float(np.sum(np.abs(np.diff(series))))


def cadlag_representative(trace: EnergyTrace, forcing_free: bool = True) -> EnergyTrace:
    """Return the right-continuous representative: at every flagged jump the
    stored value becomes the right limit. Idempotent; unflagged samples are
    untouched. With no forcing, only downward jumps are admissible."""
    if forcing_free:
        for rec in trace.jumps:
            if rec.e_right > rec.e_left + XI_SLACK:
                raise IntegrityError(
                    f"positive energy jump at index {rec.index} in a force-free trace"
                )
    if trace.is_cadlag():
        return trace
    total = trace.total.copy()
    xi = trace.xi.copy()
    for rec in trace.jumps:
        total[rec.index] = rec.e_right
        xi[rec.index] = rec.xi_right
    return EnergyTrace(trace.times.copy(), total, xi, trace.jumps)


@dataclass(frozen=True)
class CandidateSolution:
    """A trajectory with an aligned (cadlag) energy trace."""

    trajectory: Trajectory
    trace: EnergyTrace
    provenance: str  # resolved-run | coarse-grained | convex-combination | concatenation
    label: str = ""

    def __post_init__(self):
        if len(self.trace) != len(self.trajectory) or np.max(
            np.abs(self.trace.times - self.trajectory.times)
        ) > 1e-9:
            raise IntegrityError("trace times do not match trajectory times")
        kinetic = self.trajectory.kinetic_energies()
        scale = max(float(np.max(self.trace.total)), 1.0)
        if np.max(np.abs(self.trace.kinetic - kinetic)) > 1e-9 * scale:
            raise IntegrityError("trace kinetic energy does not match the trajectory")
        if not self.trace.is_cadlag():
            raise IntegrityError("candidate trace must be the cadlag representative")

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def fields(self) -> list[SpectralVelocityField]:
        return self.trajectory.fields

    @property
    def xi(self) -> np.ndarray:
        return self.trace.xi

    @property
    def total_energy(self) -> np.ndarray:
        return self.trace.total

    @property
    def grid(self):
        return self.trajectory.grid

    @property
    def config(self) -> SolverConfig | None:
        return self.trajectory.config

    def xi_max(self) -> float:
        return float(np.max(self.xi))

    def restrict(self, t0: float) -> "CandidateSolution":
        i = self.trajectory.index_of(t0)
        jumps = tuple(
            replace(r, index=r.index - i) for r in self.trace.jumps if r.index >= i
        )
        return CandidateSolution(
            self.trajectory.restrict(t0),
            EnergyTrace(self.times[i:].copy(), self.trace.total[i:].copy(),
                        self.xi[i:].copy(), jumps),
            self.provenance,
            label=self.label + f"|t>={t0:g}",
        )

    def save(self, outdir, caveats=None):
        outdir = io.write_trajectory(outdir, self.trajectory, caveats)
        cfg = self.trajectory.config
        bal = energy_balance(self.trajectory, cfg.nu, cfg.forcing)
        io.write_trace_csv(
            outdir / "trace.csv",
            self.times, self.trace.total, self.trace.kinetic, self.xi,
            bal.dissipation_rate, bal.work_rate,
        )
        return outdir

    @classmethod
    def load(cls, indir, provenance: str = "resolved-run", label: str = "") -> "CandidateSolution":
        from pathlib import Path

        indir = Path(indir)
        traj = io.load_trajectory(indir)
        trace_path = indir / "trace.csv"
        if trace_path.exists():
            data = io.read_trace_csv(trace_path)
            trace = EnergyTrace(data["t"], data["E"], data["xi"])
        else:
            trace = EnergyTrace(traj.times.copy(), traj.kinetic_energies(),
                                np.zeros(len(traj)))
        return cls(traj, trace, provenance, label=label or indir.name)


def build_energy_trace(traj: Trajectory, label: str = "") -> CandidateSolution:
    """Wrap a resolved run: xi = 0 and E(t) = 1/2||v(t)||^2."""
    if len(traj) == 0:
        raise UsageError("trajectory is empty")
    kinetic = traj.kinetic_energies()
    trace = EnergyTrace(traj.times.copy(), kinetic, np.zeros(len(traj)))
    return CandidateSolution(traj, trace, "resolved-run", label=label or "resolved")


def synthesize_defect_candidate(fine: Trajectory, coarse_cutoff: int,
                                label: str = "") -> CandidateSolution:
    """Coarse-grain a resolved run: v = P_m v_fine, xi = discarded energy.

    The total energy is the fine run's kinetic energy, so kinetic + xi is
    conserved exactly under the split (Parseval).
    """
    cfg = fine.config
    fine_cutoff = cfg.cutoff if cfg is not None else fine.grid.dealias_cutoff
    if coarse_cutoff > fine_cutoff or coarse_cutoff < 1:
        raise UsageError(
            f"coarse cutoff {coarse_cutoff} outside [1, fine cutoff {fine_cutoff}]"
        )
    fields = [galerkin_project(f, coarse_cutoff) for f in fine.fields]
    total = fine.kinetic_energies()
    kinetic = np.array([f.energy() for f in fields])
    xi = total - kinetic
    coarse_cfg = None
    if cfg is not None:
        coarse_cfg = replace(
            cfg, cutoff=coarse_cutoff,
            initial_condition=galerkin_project(cfg.initial_condition, coarse_cutoff),
        )
    traj = Trajectory(fine.times.copy(), fields, coarse_cfg)
    trace = EnergyTrace(fine.times.copy(), total, xi)
    return CandidateSolution(traj, trace, "coarse-grained",
                             label=label or f"coarse(m={coarse_cutoff})")


# ---------------------------------------------------------------------------
# residual records (shared JSON schema for every certificate check)
# ---------------------------------------------------------------------------

@dataclass
class ResidualRecord:
    check_kind: str
    residual: float
    tol: float
    verdict: bool
    form: str | None = None
    s: float | None = None
    t: float | None = None
    test_field_id: str | None = None
    k_spec: dict | None = None
    terms: dict = field(default_factory=dict)
    counted: bool = True
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "check_kind": self.check_kind,
            "form": self.form,
            "s": self.s,
            "t": self.t,
            "test_field_id": self.test_field_id,
            "K_spec": self.k_spec,
            "residual": self.residual,
            "tol": self.tol,
            "verdict": bool(self.verdict),
            "terms": self.terms,
            "counted": self.counted,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class TolerancePolicy:
    """tol = scale * (a * h^2 + b * tail): h is the snapshot spacing driving
    the trapezoid error, tail the candidate's defect/truncation energy."""

    a: float = 10.0
    b: float = 10.0
    scale: float = 1.0

    def tolerance(self, h: float, tail: float = 0.0) -> float:
        return self.scale * (self.a * h * h + self.b * tail)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "scale": self.scale}


def snapshot_spacing(times: np.ndarray) -> float:
    return float(np.max(np.diff(times)))


# ---------------------------------------------------------------------------
# strong energy inequality
# ---------------------------------------------------------------------------

def strong_energy_inequality_check(
    candidate: CandidateSolution,
    nu: float,
    forcing: Forcing | None,
    pairs: list[tuple[float, float]] | None = None,
    tol_policy: TolerancePolicy = TolerancePolicy(),
) -> list[ResidualRecord]:
    """1/2||v||^2 |_s^t + int_s^t nu||grad v||^2 <= int_s^t <f, v> on sampled
    (s, t). Kinetic energy only; defect candidates may fail this and are
    deferred to the relative-energy checks, so their records are flagged."""
    traj = candidate.trajectory
    bal = energy_balance(traj, nu, forcing)
    if pairs is None:
        idx = np.unique(np.linspace(0, len(traj) - 1, 5).astype(int))
        pairs = [(traj.times[i], traj.times[j]) for i in idx for j in idx if i < j]
    h = snapshot_spacing(traj.times)
    defective = candidate.xi_max() > 1e-10
    records = []
    for s, t in pairs:
        i_s, i_t = traj.index_of(s), traj.index_of(t)
        res = bal.residual(i_s, i_t)
        tol = tol_policy.tolerance(h)
        records.append(
            ResidualRecord(
                check_kind="energy-inequality",
                form="interval",
                s=float(s),
                t=float(t),
                residual=res,
                tol=tol,
                verdict=res <= tol,
                terms={
                    "kinetic_t": float(bal.kinetic[i_t]),
                    "kinetic_s": float(bal.kinetic[i_s]),
                    "int_dissipation_minus_work": float(
                        bal.cumulative[i_t] - bal.cumulative[i_s]
                    ),
                },
                counted=not defective,
                notes="kinetic-only inequality; deferred to REI with xi"
                if defective
                else "",
            )
        )
    return records


# ---------------------------------------------------------------------------
# weak formulation
# ---------------------------------------------------------------------------

def _require_solenoidal(w: SpectralVelocityField) -> None:
    scale = max(float(np.max(np.abs(w.coeffs))), 1e-30)
    if w.max_divergence() > 1e-10 * scale:
        raise UsageError("test field must be divergence-free")


def phi_norm(w: SpectralVelocityField, psi: TimeProfile) -> float:
    """Size of the space-time test function phi = psi(t) w(x) used to scale
    weak-form tolerances: (max|psi| + max|psi'|) (||w|| + ||grad w||)."""
    return (psi.max_value() + psi.max_derivative()) * (w.norm_l2() + w.norm_h1_semi())


class WeakFormEvaluator:
    """Precomputes the snapshot series entering the weak formulation against
    one spatial test field, so a battery of time profiles is cheap."""

    def __init__(self, candidate: CandidateSolution, w: SpectralVelocityField,
                 nu: float, forcing: Forcing | None):
        _require_solenoidal(w)
        self.candidate = candidate
        self.w = w
        self.nu = nu
        traj = candidate.trajectory
        self.times = traj.times
        grad_w = w.gradient_physical()
        vol = w.grid.cell_volume
        n = len(traj)
        self.pair_vw = np.empty(n)  # (v, w)
        self.viscous = np.empty(n)  # nu (grad v : grad w)
        self.transport = np.empty(n)  # (v (x) v : grad w)
        self.work = np.empty(n)  # <f, w>
        ksq = w.grid.k_squared
        for i, (t, v) in enumerate(zip(traj.times, traj.fields)):
            self.pair_vw[i] = v.inner(w)
            self.viscous[i] = nu * w.grid.volume * float(
                np.real(np.sum(ksq * v.coeffs * np.conj(w.coeffs)))
            )
            v_phys = spectral.to_physical(v).values
            self.transport[i] = float(
                np.sum(np.einsum("i...,ij...,j...->...", v_phys, grad_w, v_phys))
            ) * vol
            self.work[i] = forcing.velocity(t).inner(w) if forcing is not None else 0.0

    def residual(self, psi: TimeProfile) -> float:
        """- int (v, d/dt phi) + int [nu grad v : grad phi - (v(x)v) : grad phi]
        - int <f, phi> - (v0, phi(0)) with phi = psi(t) w(x)."""
        out = -integrate_profile(psi, self.times, self.pair_vw, derivative=True)
        out += integrate_profile(
            psi, self.times, self.viscous - self.transport - self.work
        )
        psi0 = float(psi.value(self.times[0]))
        if psi0 != 0.0:
            out -= psi0 * self.pair_vw[0]
        return out

    def ball_pairing(self, psi: TimeProfile) -> float:
        """The same pairing without the initial term, for profiles compactly
        supported inside (0, T) (the homogeneous weak pairing)."""
        if float(psi.value(self.times[0])) != 0.0:
            raise UsageError("ball pairing requires psi(0) = 0")
        out = integrate_profile(
            psi, self.times, self.viscous - self.transport - self.work
        )
        out -= integrate_profile(psi, self.times, self.pair_vw, derivative=True)
        return out


def default_time_profiles(t_final: float) -> list[TimeProfile]:
    """Shipped psi catalogue: an interior bump, a wide plateau, and an
    initial ramp-down exercising the (v0, phi(0)) term."""
    return [
        profiles.bump(0.5 * t_final, 0.5 * t_final),
        profiles.plateau(0.1 * t_final, 0.9 * t_final, ramp=0.2 * t_final),
        profiles.initial_ramp_down(0.6 * t_final, ramp=0.3 * t_final),
    ]


def weak_residual(
    candidate: CandidateSolution,
    w: SpectralVelocityField,
    psi: TimeProfile,
    nu: float,
    forcing: Forcing | None,
) -> float:
    return WeakFormEvaluator(candidate, w, nu, forcing).residual(psi)


def weak_residual_battery(
    candidate: CandidateSolution,
    spatial_fields: list[tuple[str, SpectralVelocityField]],
    time_profiles: list[TimeProfile],
    nu: float,
    forcing: Forcing | None,
    tol_per_phi_norm: float = 1e-6,
) -> list[ResidualRecord]:
    defective = candidate.xi_max() > 1e-10
    records = []
    for label, w in spatial_fields:
        evaluator = WeakFormEvaluator(candidate, w, nu, forcing)
        for psi in time_profiles:
            norm = phi_norm(w, psi)
            res = evaluator.residual(psi)
            tol = tol_per_phi_norm * max(norm, 1e-30)
            records.append(
                ResidualRecord(
                    check_kind="weak-form",
                    residual=res,
                    tol=tol,
                    verdict=abs(res) <= tol,
                    test_field_id=f"{label}*psi[{psi.a:g},{psi.b:g}]",
                    terms={"phi_norm": norm, "psi": psi.to_dict()},
                    counted=not defective,
                    notes="nonzero defect: weak residual reported, not certified"
                    if defective
                    else "",
                )
            )
    return records


def defect_ball_check(
    candidate: CandidateSolution,
    w: SpectralVelocityField,
    psi: TimeProfile,
    weight: RegularityWeight,
    nu: float,
    forcing: Forcing | None,
    tol_policy: TolerancePolicy = TolerancePolicy(),
) -> ResidualRecord:
    """|weak pairing against psi w| <= int K(psi w) xi dtau for rank-one K.

    For xi = 0 candidates the ball degenerates and the check reduces to the
    homogeneous weak residual being ~0."""
    if not weight.rank_one_homogeneous:
        raise PreconditionError("defect ball bound requires a rank-one homogeneous weight")
    evaluator = WeakFormEvaluator(candidate, w, nu, forcing)
    lhs = evaluator.ball_pairing(psi)
    # K(psi(t) w) = psi(t) K(w) by rank-one homogeneity (psi >= 0)
    k_w = weight.evaluate(w)
    rhs = k_w * integrate_profile(psi, candidate.times, candidate.xi)
    norm = phi_norm(w, psi)
    tol = tol_policy.tolerance(snapshot_spacing(candidate.times)) * max(norm, 1.0)
    return ResidualRecord(
        check_kind="defect-ball",
        residual=abs(lhs) - rhs,
        tol=tol,
        verdict=abs(lhs) <= rhs + tol,
        test_field_id="psi*w",
        k_spec=weight.to_dict(),
        terms={"lhs": lhs, "rhs": rhs, "K_w": k_w, "phi_norm": norm,
               "psi": psi.to_dict()},
    )
