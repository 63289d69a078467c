"""Regularity weights for the relative dissipation forms.

Three variants are shipped:

* ``serrin``:    K(v) = c ||v||_{L^r}^s with the exponent identity
  2/s + d/r = 1, r in (d, inf), s in (2, inf); admissible for nu > 0 and
  homogeneous of rank s.
* ``lipschitz``: K(v) = factor * |v|_{C^{0,1}} (default factor 2), the
  rank-one homogeneous weight used for nu = 0. The seminorm is approximated
  by the max over collocation points of the largest singular value of grad v.
* ``zero``:      K = 0, generally inadmissible; useful as a probe witness.

The constant c of the Serrin weight on the torus is not pinned analytically;
``calibrate_serrin`` finds the smallest c making the sampled relative
dissipation nonnegative over a randomized family and applies a safety factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import UsageError
from .spectral import GridSpec, SpectralVelocityField


@dataclass(frozen=True)
class RegularityWeight:
    variant: str  # "serrin" | "lipschitz" | "zero"
    r: float | None = None
    s: float | None = None
    c: float | None = None
    factor: float = 2.0
    dim: int | None = None
    calibration: dict | None = field(default=None, compare=False)

    @property
    def homogeneity_rank(self) -> float:
        """Exponent h with K(alpha v) = |alpha|^h K(v)."""
        if self.variant == "serrin":
            return float(self.s)
        if self.variant == "lipschitz":
            return 1.0
        return 0.0

    @property
    def rank_one_homogeneous(self) -> bool:
        return self.variant == "lipschitz"

    def evaluate(self, v: SpectralVelocityField) -> float:
        if self.variant == "zero":
            return 0.0
        if self.variant == "serrin":
            return self.c * spectral.compute_norm(v, "Lp", self.r) ** self.s
        if self.variant == "lipschitz":
            return self.factor * spectral.lipschitz_seminorm(v)
        raise UsageError(f"unknown weight variant {self.variant!r}")

    def base(self, v: SpectralVelocityField) -> float:
        """The weight with its scalable constant divided out (K = const * base)."""
        if self.variant == "zero":
            return 0.0
        if self.variant == "serrin":
            return spectral.compute_norm(v, "Lp", self.r) ** self.s
        return spectral.lipschitz_seminorm(v)

    def check_regime(self, nu: float) -> None:
        if nu == 0.0 and self.variant == "serrin":
            raise UsageError("the Serrin weight is only admissible for nu > 0")

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == "serrin":
            out.update({"r": self.r, "s": self.s, "c": self.c})
            if self.calibration is not None:
                out["calibration"] = self.calibration
        elif self.variant == "lipschitz":
            out["factor"] = self.factor
        return out


def regularity_weight_eval(weight: RegularityWeight, v: SpectralVelocityField) -> float:
    return weight.evaluate(v)


def serrin_exponent(r: float, dim: int) -> float:
    """s solving 2/s + d/r = 1."""
    if r <= dim:
        raise UsageError(f"Serrin exponent requires r > d, got r={r}, d={dim}")
    return 2.0 * r / (r - dim)


def serrin(r: float, s: float, c: float, dim: int,
           calibration: dict | None = None) -> RegularityWeight:
    if not (r > dim and np.isfinite(r)):
        raise UsageError(f"Serrin r must lie in (d, inf), got {r}")
    if not (s > 2 and np.isfinite(s)):
        raise UsageError(f"Serrin s must lie in (2, inf), got {s}")
    if c <= 0:
        raise UsageError("Serrin constant c must be positive")
    if abs(2.0 / s + dim / r - 1.0) > 1e-12:
        raise UsageError(f"Serrin exponents violate 2/s + d/r = 1: r={r}, s={s}, d={dim}")
    return RegularityWeight("serrin", r=r, s=s, c=c, dim=dim, calibration=calibration)


def lipschitz(factor: float = 2.0) -> RegularityWeight:
    if factor <= 0:
        raise UsageError("Lipschitz factor must be positive")
    return RegularityWeight("lipschitz", factor=factor)


def zero_weight() -> RegularityWeight:
    return RegularityWeight("zero")


# ---------------------------------------------------------------------------
# admissibility probing and calibration
# ---------------------------------------------------------------------------

def _dissipation_core(v, vtilde, nu: float) -> float:
    """The K-free part of the relative dissipation.

    nu > 0: nu ||grad(v - vt)||^2 - b(v - vt, v - vt, vt);
    nu = 0: the quadratic form int w^T (grad vt)_sym w (same value by the
    skew-symmetry identity, but assembled as stated).
    """
    w = v - vtilde
    if nu > 0:
        return nu * w.norm_h1_semi() ** 2 - spectral.trilinear(w, w, vtilde)
    sym = spectral.symmetric_gradient(vtilde)
    w_phys = spectral.to_physical(w).values
    quad = np.einsum("i...,ij...,j...->...", w_phys, sym, w_phys)
    return float(np.sum(quad)) * v.grid.cell_volume


@dataclass(frozen=True)
class AdmissibilityReport:
    weight: RegularityWeight
    nu: float
    sample_count: int
    seed: int
    min_w: float
    min_w_index: int
    calibrated_c: float
    negative_samples: int

    def to_dict(self) -> dict:
        return {
            "K_spec": self.weight.to_dict(),
            "nu": self.nu,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "min_W": self.min_w,
            "min_W_sample": self.min_w_index,
            "calibrated_c": self.calibrated_c,
            "negative_samples": self.negative_samples,
        }


def admissibility_probe(
    weight: RegularityWeight,
    nu: float,
    grid: GridSpec,
    sample_count: int = 200,
    rng_seed: int = 0,
    kmax: int | None = None,
) -> AdmissibilityReport:
    """Sample W over random (v, vtilde) pairs; report min W and the smallest
    scalable constant making every sample nonnegative.

    Deterministic for a fixed seed. The sampled family spans several
    amplitude decades so big-|w| / small-|vt| corners are exercised.
    """
    if sample_count < 1:
        raise UsageError("sample_count must be >= 1")
    weight.check_regime(nu)
    rng = np.random.default_rng(rng_seed)
    kmax = kmax if kmax is not None else min(grid.dealias_cutoff, 6)

    min_w = np.inf
    min_idx = -1
    c_needed = 0.0
    negatives = 0
    for i in range(sample_count):
        amp_v = 10.0 ** rng.uniform(-1, 1)
        amp_t = 10.0 ** rng.uniform(-1, 1)
        v = spectral.random_solenoidal_field(grid, kmax, rng, amplitude=amp_v)
        vt = spectral.random_solenoidal_field(grid, kmax, rng, amplitude=amp_t)
        core = _dissipation_core(v, vt, nu)
        rel = 0.5 * (v - vt).norm_l2() ** 2
        base = weight.base(vt)
        if weight.variant == "zero":
            w_val = core
        else:
            const = weight.c if weight.variant == "serrin" else weight.factor
            w_val = core + const * base * rel
        if w_val < min_w:
            min_w, min_idx = w_val, i
        if w_val < 0:
            negatives += 1
        if core < 0 and base * rel > 0:
            c_needed = max(c_needed, -core / (base * rel))
        elif core < 0 and base * rel == 0.0:
            c_needed = np.inf
    return AdmissibilityReport(
        weight=weight,
        nu=nu,
        sample_count=sample_count,
        seed=rng_seed,
        min_w=float(min_w),
        min_w_index=min_idx,
        calibrated_c=float(c_needed),
        negative_samples=negatives,
    )


def calibrate_serrin(
    grid: GridSpec,
    nu: float,
    r: float | None = None,
    sample_count: int = 200,
    rng_seed: int = 2021,
    safety: float = 2.0,
) -> RegularityWeight:
    """Serrin weight with c = safety * (smallest c with all sampled W >= 0)."""
    if nu <= 0:
        raise UsageError("Serrin calibration requires nu > 0")
    r = r if r is not None else 2.0 * grid.dim
    s = serrin_exponent(r, grid.dim)
    trial = serrin(r, s, c=1.0, dim=grid.dim)
    probe = admissibility_probe(trial, nu, grid, sample_count, rng_seed)
    c = safety * max(probe.calibrated_c, 1e-6)
    calibration = {
        "sample_count": sample_count,
        "seed": rng_seed,
        "safety": safety,
        "c_min_sampled": probe.calibrated_c,
    }
    return serrin(r, s, c=c, dim=grid.dim, calibration=calibration)
