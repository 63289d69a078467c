"""Maximal-dissipation selection over candidate sets.

The physically selected candidate minimizes the (right-continuous) total
energy E(t+) pointwise in time. Candidate sets share data (v0, f, nu, grid,
snapshot times); pointwise dominance can genuinely fail on a finite set, in
which case the crossing times are reported instead of inventing a total
order. Restart refinement removes defect energy: a fresh resolved run from
the stored state at t0 concatenated at t0 drops E(t0+) by exactly xi(t0+).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import testfields
from .certificates import CandidateSolution, EnergyTrace, JumpRecord, cadlag_representative
from .errors import PreconditionError, UsageError
from .solver import SolverConfig, Trajectory, integrate

DOMINANCE_TOL = 1e-10
FIELD_EQUALITY_TOL = 1e-8
JUMP_TOL = 1e-10


def _check_compatible(a: CandidateSolution, b: CandidateSolution) -> None:
    if a.grid != b.grid:
        raise UsageError("candidates live on different grids")
    if len(a.times) != len(b.times) or np.max(np.abs(a.times - b.times)) > 1e-9:
        raise UsageError("candidates have different time grids")
    e0 = a.fields[0].energy()
    if abs(b.fields[0].energy() - e0) > 1e-10 * max(e0, 1.0):
        raise UsageError("candidates do not share the initial kinetic energy")


@dataclass(frozen=True)
class CandidateSet:
    """Candidates sharing initial data, forcing, viscosity and time grid."""

    candidates: tuple[CandidateSolution, ...]

    def __post_init__(self):
        if not self.candidates:
            raise UsageError("candidate set is empty")
        first = self.candidates[0]
        labels = [c.label for c in self.candidates]
        if len(set(labels)) != len(labels):
            raise UsageError("candidate labels must be unique")
        for c in self.candidates[1:]:
            _check_compatible(first, c)

    def __len__(self):
        return len(self.candidates)

    @property
    def times(self) -> np.ndarray:
        return self.candidates[0].times


# ---------------------------------------------------------------------------
# convex structure
# ---------------------------------------------------------------------------

def convex_combine(
    c1: CandidateSolution, c2: CandidateSolution, lam: float
) -> CandidateSolution:
    """v = lam v1 + (1-lam) v2, E = lam E1 + (1-lam) E2,
    xi = E - 1/2||v||^2.

    Strict convexity of the kinetic energy adds defect: xi exceeds the
    combined defects by exactly lam (1-lam) 1/2 ||v1 - v2||^2.
    """
    if not 0.0 <= lam <= 1.0:
        raise UsageError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 1.0:
        return c1
    if lam == 0.0:
        return c2
    _check_compatible(c1, c2)
    fields = [lam * a + (1.0 - lam) * b for a, b in zip(c1.fields, c2.fields)]
    total = lam * c1.total_energy + (1.0 - lam) * c2.total_energy
    kinetic = np.array([f.energy() for f in fields])
    xi = total - kinetic
    traj = Trajectory(c1.times.copy(), fields, c1.config)
    trace = EnergyTrace(c1.times.copy(), total, xi)
    return CandidateSolution(
        traj, trace, "convex-combination",
        label=f"combine({c1.label},{c2.label},{lam:g})",
    )


def concatenate(
    c1: CandidateSolution, c2: CandidateSolution, t0: float
) -> CandidateSolution:
    """c1 on [0, t0), c2 on [t0, T]; requires matching state v2(t0) = v1(t0)
    and a non-increasing defect xi2(t0) <= xi1(t0). The junction value is the
    right limit (cadlag); the left values stay inspectable on the jump record.
    """
    i0 = c1.trajectory.index_of(t0)
    j0 = c2.trajectory.index_of(t0)
    if len(c2.times) - j0 != len(c1.times) - i0 or np.max(
        np.abs(c2.times[j0:] - c1.times[i0:])
    ) > 1e-9:
        raise UsageError("second candidate does not cover [t0, T] on the same grid")
    v1, v2 = c1.fields[i0], c2.fields[j0]
    scale = max(v1.norm_l2(), 1.0)
    if (v1 - v2).norm_l2() > 1e-10 * scale:
        raise PreconditionError("states do not match at the junction time")
    if c2.xi[j0] > c1.xi[i0] + 1e-12:
        raise PreconditionError("defect must not increase across the junction")

    fields = list(c1.fields[:i0]) + list(c2.fields[j0:])
    total = np.concatenate([c1.total_energy[:i0], c2.total_energy[j0:]])
    xi = np.concatenate([c1.xi[:i0], c2.xi[j0:]])
    jumps = tuple(r for r in c1.trace.jumps if r.index < i0) + tuple(
        replace(r, index=r.index - j0 + i0) for r in c2.trace.jumps if r.index > j0
    )
    if abs(c1.total_energy[i0] - c2.total_energy[j0]) > 1e-14 * max(total[i0], 1.0):
        jumps += (
            JumpRecord(
                index=i0,
                e_left=float(c1.total_energy[i0]),
                xi_left=float(c1.xi[i0]),
                e_right=float(c2.total_energy[j0]),
                xi_right=float(c2.xi[j0]),
            ),
        )
    trace = cadlag_representative(
        EnergyTrace(c1.times.copy(), total, xi, tuple(sorted(jumps, key=lambda r: r.index)))
    )
    cfg = c1.config
    if cfg is not None and c2.config is not None and c2.config.cutoff > cfg.cutoff:
        # the tail was integrated at finer resolution; record the wider span
        cfg = replace(cfg, cutoff=c2.config.cutoff)
    traj = Trajectory(c1.times.copy(), fields, cfg)
    return CandidateSolution(
        traj, trace, "concatenation", label=f"concat({c1.label},{c2.label}@{t0:g})"
    )


def restart_refinement(
    c: CandidateSolution, t0: float, solver_config: SolverConfig
) -> CandidateSolution:
    """Integrate a fresh resolved run from the stored state v(t0) with the
    defect reset to zero, concatenated at t0. E(t0+) drops to 1/2||v(t0)||^2,
    i.e. by exactly xi(t0+)."""
    i0 = c.trajectory.index_of(t0)
    times_tail = c.times[i0:]
    if t0 == c.times[0]:
        stride_dt = float(c.times[1] - c.times[0]) if len(c.times) > 1 else solver_config.dt
    else:
        stride_dt = float(times_tail[1] - times_tail[0]) if len(times_tail) > 1 else solver_config.dt
    stride = int(round(stride_dt / solver_config.dt))
    if abs(stride * solver_config.dt - stride_dt) > 1e-9:
        raise UsageError("solver dt does not divide the candidate's snapshot spacing")

    t_span = float(c.times[-1] - t0)
    if t_span <= 0:
        raise UsageError("cannot restart at the final snapshot")
    forcing = solver_config.forcing
    if forcing is not None and t0 != 0.0:
        forcing = testfields.time_shifted(forcing, t0)
    cfg = replace(
        solver_config,
        t_final=t_span,
        snapshot_stride=stride,
        initial_condition=c.fields[i0],
        forcing=forcing,
        ic_spec=f"restart@{t0:g}",
    )
    fresh = integrate(cfg)
    shifted = Trajectory(fresh.times + t0, fresh.fields, cfg)
    from .certificates import build_energy_trace

    tail = build_energy_trace(shifted, label=f"{c.label}|restart@{t0:g}")
    if t0 == c.times[0]:
        return CandidateSolution(
            tail.trajectory, tail.trace, "resolved-run", label=tail.label
        )
    return concatenate(c, tail, t0)


def refine_until_resolved(
    c: CandidateSolution, solver_config: SolverConfig, jump_tol: float = JUMP_TOL
) -> tuple[CandidateSolution, list[dict]]:
    """Restart at the earliest snapshot with xi(t+) > jump_tol, repeatedly.

    Each restart zeroes the defect from the restart time on, so the loop
    terminates with xi = 0 within tolerance everywhere.
    """
    refinements: list[dict] = []
    current = c
    while True:
        above = np.nonzero(current.xi > jump_tol)[0]
        if len(above) == 0:
            return current, refinements
        idx = int(above[0])
        t0 = float(current.times[idx])
        removed = float(current.xi[idx])
        if idx == len(current.times) - 1:
            # no tail left to integrate: dropping the terminal defect is the
            # (degenerate) restart, E(T+) falls to the kinetic energy
            total = current.total_energy.copy()
            xi = current.xi.copy()
            jump = JumpRecord(idx, float(total[idx]), float(xi[idx]),
                              float(total[idx] - xi[idx]), 0.0)
            total[idx] -= xi[idx]
            xi[idx] = 0.0
            trace = EnergyTrace(current.times.copy(), total, xi,
                                current.trace.jumps + (jump,))
            current = CandidateSolution(current.trajectory, trace,
                                        "concatenation", label=current.label + "|trim")
        else:
            current = restart_refinement(current, t0, solver_config)
        refinements.append({"t0": t0, "xi_removed": removed})


# ---------------------------------------------------------------------------
# pointwise-minimal selection
# ---------------------------------------------------------------------------

@dataclass
class SelectionOutcome:
    selected: CandidateSolution | None
    crossing_times: list[float]
    contradiction: dict | None = None

    @property
    def incomparable(self) -> bool:
        return self.selected is None and self.contradiction is None

    def to_dict(self) -> dict:
        out: dict = {}
        if self.selected is not None:
            out["selected_id"] = self.selected.label
        if self.incomparable:
            out["incomparable"] = self.crossing_times
        if self.contradiction is not None:
            out["convexity_contradiction"] = self.contradiction
        return out


def select_minimal(cset: CandidateSet, tol: float = DOMINANCE_TOL) -> SelectionOutcome:
    """Return the candidate whose E(t+) is pointwise <= every other's.

    If no candidate dominates, report the times where the pointwise argmin
    switches. If two dominating candidates have equal energy profiles but
    differ as fields, report the strict-convexity contradiction instead of
    picking silently (their midpoint combination would have strictly smaller
    energy, so neither can be minimal).
    """
    cands = cset.candidates
    energies = np.stack([c.total_energy for c in cands])
    dominators = [
        i
        for i in range(len(cands))
        if np.all(energies[i] <= energies.min(axis=0) + tol)
    ]
    if not dominators:
        lead = np.argmin(energies, axis=0)
        switches = np.nonzero(np.diff(lead) != 0)[0]
        crossing = [float(cset.times[j + 1]) for j in switches]
        return SelectionOutcome(selected=None, crossing_times=crossing)
    dominators.sort(key=lambda i: cands[i].label)
    best = cands[dominators[0]]
    for i in dominators[1:]:
        other = cands[i]
        dist = best.trajectory.distance_l2l2(other.trajectory)
        scale = max(np.sqrt(2.0 * np.max(best.total_energy)), 1.0)
        if dist > FIELD_EQUALITY_TOL * scale:
            return SelectionOutcome(
                selected=None,
                crossing_times=[],
                contradiction={
                    "labels": [best.label, other.label],
                    "l2l2_distance": dist,
                    "note": "equal energy profiles but distinct fields: the midpoint"
                    " combination has strictly smaller energy",
                },
            )
    return SelectionOutcome(selected=best, crossing_times=[])


def strict_convexity_gap(
    c1: CandidateSolution, c2: CandidateSolution, lam: float
) -> np.ndarray:
    """xi_combined - [lam xi1 + (1-lam) xi2] as a time series; equals
    lam (1-lam) 1/2 ||v1 - v2||^2 exactly (parallelogram identity)."""
    combo = convex_combine(c1, c2, lam)
    return combo.xi - (lam * c1.xi + (1.0 - lam) * c2.xi)


def semiflow_check(
    c: CandidateSolution,
    t0: float,
    battery,
) -> list:
    """Run an interval-REI battery on the restriction to [t0, T].

    ``battery`` maps a candidate to a list of records; restriction reuses the
    parent's snapshots, so verdicts are inherited, never newly created.
    """
    restricted = c.restrict(t0)
    return battery(restricted)
