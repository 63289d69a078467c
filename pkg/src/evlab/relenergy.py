"""Relative energy machinery: R, the system operator pairing, the relative
dissipation forms, and the relative energy inequality in its interval, local,
reduced, Gronwall, and mollified guises.

For a candidate (v, xi) and a smooth comparison field vt the interval form
reads

    R(v(t)|vt(t)) + xi(t)
      + int_s^t [ W(v|vt) + <A(vt), v - vt> - K(vt) (R + xi) ] dtau
      <= R(v(s)|vt(s)) + xi(s)

with R(v|vt) = 1/2 ||v - vt||^2,

    A(vt) = d/dt vt + (vt.grad) vt - nu Lap vt - f,
    W(v|vt) = nu ||grad(v - vt)||^2 - b(v-vt, v-vt, vt) + K(vt) R   (nu > 0)
    W(v|vt) = int (v-vt)^T (grad vt)_sym (v-vt) + K(vt) R           (nu = 0).

The convective parts agree through the skew-symmetry identity
-b(w, w, vt) = int w^T (grad vt)_sym w for solenoidal w, which holds exactly
in the dealiased discretization; the evaluator uses the quadratic-form side
with cached gradients, the standalone operation the stated trilinear side.

For a solution of the projected system and comparison fields inside the
Galerkin span the interval form is an equality, so residuals of resolved runs
measure pure discretization error (trapezoid in time + integrator error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral, weights as weights_mod
from .certificates import (
    CandidateSolution,
    ResidualRecord,
    TolerancePolicy,
    snapshot_spacing,
)
from .errors import PreconditionError, UsageError
from .profiles import TimeProfile, integrate_profile
from .solver import cumulative_trapezoid
from .spectral import SpectralVelocityField
from .testfields import Forcing, TestField
from .weights import RegularityWeight


def relative_energy(v: SpectralVelocityField, vtilde: SpectralVelocityField) -> float:
    """R(v|vt) = 1/2 ||v - vt||^2_{L2}; symmetric, zero iff v = vt."""
    if v.grid != vtilde.grid:
        raise UsageError("relative energy requires fields on the same grid")
    return 0.5 * (v - vtilde).norm_l2() ** 2


def _h1_inner(a: SpectralVelocityField, b: SpectralVelocityField) -> float:
    """(grad a, grad b) in coefficient space."""
    g = a.grid
    return g.volume * float(np.real(np.sum(g.k_squared * a.coeffs * np.conj(b.coeffs))))


def _convection_raw(v: SpectralVelocityField) -> SpectralVelocityField:
    """div(v (x) v) dealiased, without the Leray projection (the pairing
    partner is solenoidal, so the gradient part drops out of inner products)."""
    return SpectralVelocityField(v.grid, spectral._divergence_uu(v))


def system_operator_pairing(
    vtilde: TestField,
    w: SpectralVelocityField,
    nu: float,
    forcing: Forcing | None,
    t: float,
) -> float:
    """<A_nu(vt), w> = <d/dt vt + (vt.grad)vt - nu Lap vt - f, w>."""
    vt = vtilde.velocity(t)
    out = vtilde.time_derivative(t).inner(w)
    out += _convection_raw(vt).inner(w)
    if nu > 0:
        out += nu * _h1_inner(vt, w)
    if forcing is not None:
        out -= forcing.velocity(t).inner(w)
    return out


def relative_dissipation(
    v: SpectralVelocityField,
    vtilde: SpectralVelocityField,
    nu: float,
    weight: RegularityWeight,
) -> float:
    """W_nu(v|vt) (nu > 0) or W_0(v|vt) (nu = 0) with the given weight."""
    weight.check_regime(nu)
    core = weights_mod._dissipation_core(v, vtilde, nu)
    return core + weight.evaluate(vtilde) * relative_energy(v, vtilde)


# ---------------------------------------------------------------------------
# the REI evaluator
# ---------------------------------------------------------------------------

class ReiEvaluator:
    """Per-snapshot terms of the relative energy inequality for one
    (candidate, comparison field, weight) triple; every form of the
    inequality is then a cheap assembly on top."""

    def __init__(
        self,
        candidate: CandidateSolution,
        vtilde: TestField,
        weight: RegularityWeight,
        nu: float,
        forcing: Forcing | None = None,
        tol_policy: TolerancePolicy = TolerancePolicy(),
    ):
        weight.check_regime(nu)
        self.candidate = candidate
        self.vtilde = vtilde
        self.weight = weight
        self.nu = nu
        self.forcing = forcing
        self.tol_policy = tol_policy

        times = candidate.times
        n = len(times)
        self.times = times
        self.h = snapshot_spacing(times)
        self.tail = candidate.xi_max()

        self.rel = np.empty(n)  # R(v|vt)
        self.xi = candidate.xi
        self.k_vals = np.empty(n)  # K(vt)
        self.w_vals = np.empty(n)  # W(v|vt)
        self.a_vals = np.empty(n)  # <A(vt), v - vt>
        self.pair = np.empty(n)  # (v, vt), for the reduced form
        self.kinetic = np.empty(n)

        vt_cache: tuple | None = None
        vol = candidate.grid.cell_volume
        for i, (t, v) in enumerate(zip(times, candidate.fields)):
            if vt_cache is None or not vtilde.steady:
                vt = vtilde.velocity(t)
                vt_cache = (
                    vt,
                    spectral.symmetric_gradient(vt),
                    weight.evaluate(vt),
                    _convection_raw(vt),
                )
            vt, sym_grad, k_val, conv_vt = vt_cache
            w = v - vt
            self.rel[i] = 0.5 * w.norm_l2() ** 2
            self.k_vals[i] = k_val
            self.kinetic[i] = v.energy()
            self.pair[i] = v.inner(vt)

            w_phys = spectral.to_physical(w).values
            quad = float(
                np.sum(np.einsum("i...,ij...,j...->...", w_phys, sym_grad, w_phys))
            ) * vol
            if nu > 0:
                self.w_vals[i] = nu * w.norm_h1_semi() ** 2 + quad + k_val * self.rel[i]
            else:
                self.w_vals[i] = quad + k_val * self.rel[i]

            a = conv_vt.inner(w)
            if not vtilde.steady:
                a += vtilde.time_derivative(t).inner(w)
            if nu > 0:
                a += nu * _h1_inner(vt, w)
            if forcing is not None:
                a -= forcing.velocity(t).inner(w)
            self.a_vals[i] = a

        self.integrand = self.w_vals + self.a_vals - self.k_vals * (self.rel + self.xi)
        self.cumulative = cumulative_trapezoid(times, self.integrand)
        self._cum_w = cumulative_trapezoid(times, self.w_vals)
        self._cum_a = cumulative_trapezoid(times, self.a_vals)
        self._cum_krxi = cumulative_trapezoid(times, self.k_vals * (self.rel + self.xi))

    # -- forms -------------------------------------------------------------
    def _record(self, form, s, t, residual, terms, tol=None) -> ResidualRecord:
        tol = tol if tol is not None else self.tol_policy.tolerance(self.h, self.tail)
        return ResidualRecord(
            check_kind="rei",
            form=form,
            s=s,
            t=t,
            residual=float(residual),
            tol=tol,
            verdict=residual <= tol,
            test_field_id=self.vtilde.label,
            k_spec=self.weight.to_dict(),
            terms=terms,
        )

    def interval(self, s: float, t: float) -> ResidualRecord:
        """Signed residual LHS - RHS of the interval form; one-sided traces
        are realized as the stored snapshot values at s and t."""
        i_s = self.candidate.trajectory.index_of(s)
        i_t = self.candidate.trajectory.index_of(t)
        if i_s >= i_t:
            raise UsageError("interval form needs snapshot times s < t")
        integral = float(self.cumulative[i_t] - self.cumulative[i_s])
        residual = (
            self.rel[i_t] + self.xi[i_t] + integral - (self.rel[i_s] + self.xi[i_s])
        )
        terms = {
            "R_t": float(self.rel[i_t]),
            "R_s": float(self.rel[i_s]),
            "xi_t": float(self.xi[i_t]),
            "xi_s": float(self.xi[i_s]),
            "int_W": float(self._cum_w[i_t] - self._cum_w[i_s]),
            "int_A": float(self._cum_a[i_t] - self._cum_a[i_s]),
            "int_K_Rxi": float(self._cum_krxi[i_t] - self._cum_krxi[i_s]),
        }
        return self._record("interval", float(s), float(t), residual, terms)

    def _ddt(self, series: np.ndarray, i: int) -> float:
        times = self.times
        if 0 < i < len(times) - 1:
            return float((series[i + 1] - series[i - 1]) / (times[i + 1] - times[i - 1]))
        if i == 0:
            return float((series[1] - series[0]) / (times[1] - times[0]))
        return float((series[-1] - series[-2]) / (times[-1] - times[-2]))

    def local(self, t: float) -> ResidualRecord:
        """d/dt [R + xi] + W + <A, v - vt> - K (R + xi) <= 0 at a snapshot,
        the time derivative by centered differences."""
        i = self.candidate.trajectory.index_of(t)
        ddt = self._ddt(self.rel + self.xi, i)
        residual = ddt + self.integrand[i]
        terms = {
            "ddt_R_xi": ddt,
            "W": float(self.w_vals[i]),
            "A": float(self.a_vals[i]),
            "K_Rxi": float(self.k_vals[i] * (self.rel[i] + self.xi[i])),
        }
        return self._record("local", None, float(t), residual, terms)

    def reduced(self, t: float) -> ResidualRecord:
        """d/dt [E - (v, vt)] + nu (grad v, grad v - grad vt)
        + (v (x) v : grad vt) - <f, v - vt> + K(vt) (1/2||v||^2 - E) <= 0
        for a time-independent comparison field."""
        if not self.vtilde.steady:
            raise UsageError("the reduced form requires a time-independent test field")
        i = self.candidate.trajectory.index_of(t)
        vt = self.vtilde.velocity(0.0)
        v = self.candidate.fields[i]
        total = self.candidate.total_energy
        ddt = self._ddt(total - self.pair, i)
        viscous = self.nu * (_h1_inner(v, v) - _h1_inner(v, vt)) if self.nu > 0 else 0.0
        # (v (x) v : grad vt) = -int div(v (x) v) . vt (periodic, by parts)
        transport = -_convection_raw(v).inner(vt)
        work = 0.0
        if self.forcing is not None:
            f = self.forcing.velocity(t)
            work = f.inner(v) - f.inner(vt)
        k_term = self.k_vals[i] * (self.kinetic[i] - total[i])
        residual = ddt + viscous + transport - work + k_term
        terms = {
            "ddt_E_pair": ddt,
            "viscous": viscous,
            "transport": transport,
            "work": work,
            "K_term": float(k_term),
        }
        return self._record("reduced", None, float(t), residual, terms)

    # -- Gronwall / dissipative form ----------------------------------------
    def gronwall(self) -> "GronwallReport":
        """R(v(t)|vt(t)) + int_0^t <A(vt), v-vt> e^{int_tau^t K} dtau
        <= R(v0|vt(0)) e^{int_0^t K}; requires xi(0) = 0."""
        if self.xi[0] > 1e-12:
            raise PreconditionError("the dissipative bound requires xi(0) = 0")
        cum_k = cumulative_trapezoid(self.times, self.k_vals)
        damped = cumulative_trapezoid(self.times, self.a_vals * np.exp(-cum_k))
        lhs = self.rel + np.exp(cum_k) * damped
        rhs = self.rel[0] * np.exp(cum_k)
        slack = rhs - lhs
        tol = self.tol_policy.tolerance(self.h, self.tail)
        return GronwallReport(
            times=self.times.copy(),
            lhs=lhs,
            rhs=rhs,
            min_slack=float(np.min(slack)),
            tol=tol,
            verdict=bool(np.min(slack) >= -tol),
            test_field_id=self.vtilde.label,
            k_spec=self.weight.to_dict(),
        )

    # -- mollified cross-check ----------------------------------------------
    def mollified(self, profile: TimeProfile) -> float:
        """- int phi' (R + xi) + int phi (W + <A, v-vt> - K(R + xi)) for a
        nonnegative bump phi compactly supported in the sampled window."""
        if not profile.left_ramp:
            raise UsageError("mollifier must vanish at both support ends")
        if profile.a < self.times[0] - 1e-12 or profile.b > self.times[-1] + 1e-12:
            raise UsageError("mollifier support exceeds the candidate's time range")
        g = self.rel + self.xi
        out = -integrate_profile(profile, self.times, g, derivative=True)
        out += integrate_profile(profile, self.times, self.integrand)
        return out


@dataclass
class GronwallReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    min_slack: float
    tol: float
    verdict: bool
    test_field_id: str
    k_spec: dict

    def to_dict(self) -> dict:
        return {
            "check_kind": "gronwall-dissipative",
            "test_field_id": self.test_field_id,
            "K_spec": self.k_spec,
            "min_slack": self.min_slack,
            "tol": self.tol,
            "verdict": bool(self.verdict),
        }


# ---------------------------------------------------------------------------
# operation-style entry points
# ---------------------------------------------------------------------------

def rei_residual(
    candidate: CandidateSolution,
    vtilde: TestField,
    weight: RegularityWeight,
    form: str,
    nu: float,
    forcing: Forcing | None = None,
    s: float | None = None,
    t: float | None = None,
    tol_policy: TolerancePolicy = TolerancePolicy(),
) -> ResidualRecord:
    ev = ReiEvaluator(candidate, vtilde, weight, nu, forcing, tol_policy)
    if form == "interval":
        if s is None or t is None:
            raise UsageError("interval form needs both s and t")
        return ev.interval(s, t)
    if form == "local":
        if t is None:
            raise UsageError("local form needs t")
        return ev.local(t)
    if form == "reduced":
        if t is None:
            raise UsageError("reduced form needs t")
        return ev.reduced(t)
    raise UsageError(f"unknown REI form {form!r}")


def gronwall_dissipative_bound(
    candidate: CandidateSolution,
    vtilde: TestField,
    weight: RegularityWeight,
    nu: float,
    forcing: Forcing | None = None,
    tol_policy: TolerancePolicy = TolerancePolicy(),
) -> GronwallReport:
    return ReiEvaluator(candidate, vtilde, weight, nu, forcing, tol_policy).gronwall()


def mollified_residual(
    candidate: CandidateSolution,
    vtilde: TestField,
    weight: RegularityWeight,
    profile: TimeProfile,
    nu: float,
    forcing: Forcing | None = None,
) -> float:
    return ReiEvaluator(candidate, vtilde, weight, nu, forcing).mollified(profile)
