"""Periodic-torus spectral core: grids, velocity fields, transforms,
divergence-free projection, norms, and the trilinear convection form.

All fields live on the torus [0, 2pi)^d with d in {2, 3}, so wavevectors are
integer tuples. Fourier coefficients use the convention

    v(x) = sum_k vhat(k) exp(i k.x),

i.e. a constant field has its value in the k=0 mode. With this convention the
L2 norm is ||v||^2 = (2pi)^d sum_k |vhat(k)|^2, which equals the collocation
quadrature sum |v(x_j)|^2 (2pi/N)^d exactly (discrete Parseval).

Products of band-limited fields are evaluated pseudo-spectrally; the 2/3-rule
cutoff floor(N/3) makes the quadratic convection term alias-free, which in
turn makes the skew-symmetry of the trilinear form hold discretely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, UsageError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Collocation grid on the torus [0, 2pi)^d.

    ``n`` is the number of points per dimension (even, >= 8 for production
    use; smaller even values are accepted for unit tests). The dealiasing
    cutoff for quadratic products is floor(n/3).
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigurationError(f"dim must be 2 or 3, got {self.dim}")
        if self.n % 2 != 0 or self.n < 4:
            raise ConfigurationError(f"n must be even and >= 4, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(1, self.dim + 1))

    @property
    def cell_volume(self) -> float:
        return (TWO_PI / self.n) ** self.dim

    @property
    def volume(self) -> float:
        return TWO_PI ** self.dim

    @property
    def dealias_cutoff(self) -> int:
        return self.n // 3

    @cached_property
    def wavenumbers_1d(self) -> np.ndarray:
        """Integer wavenumbers in FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def k_vectors(self) -> np.ndarray:
        """Array of shape (dim, n, ..., n): component i is k_i on the mode grid."""
        axes = np.meshgrid(*([self.wavenumbers_1d] * self.dim), indexing="ij")
        return np.stack(axes)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.k_vectors**2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask keeping modes with |k_i| <= floor(n/3) for every i."""
        return self.infnorm_mask(self.dealias_cutoff)

    def infnorm_mask(self, cutoff: int) -> np.ndarray:
        """Boolean mask keeping modes with max_i |k_i| <= cutoff."""
        return np.all(np.abs(self.k_vectors) <= cutoff, axis=0)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Collocation coordinates, shape (dim, n, ..., n)."""
        x = np.arange(self.n) * (TWO_PI / self.n)
        axes = np.meshgrid(*([x] * self.dim), indexing="ij")
        return np.stack(axes)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SpectralVelocityField:
    """Divergence-free velocity as truncated Fourier coefficients.

    ``coeffs`` has shape (dim, n, ..., n) complex; the Hermitian symmetry of a
    real field and the solenoidality constraint k.vhat(k) = 0 are invariants
    maintained by the constructors, not re-checked on every operation.
    """

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.grid.dim,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise ConfigurationError(
                f"coefficient shape {self.coeffs.shape} does not match grid {expected}"
            )
        object.__setattr__(self, "coeffs", _freeze(self.coeffs.astype(np.complex128, copy=True)))

    # -- algebra ----------------------------------------------------------
    def __add__(self, other: "SpectralVelocityField") -> "SpectralVelocityField":
        _require_same_grid(self, other)
        return SpectralVelocityField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralVelocityField") -> "SpectralVelocityField":
        _require_same_grid(self, other)
        return SpectralVelocityField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralVelocityField":
        return SpectralVelocityField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralVelocityField":
        return self * (-1.0)

    # -- diagnostics --------------------------------------------------------
    def max_divergence(self) -> float:
        """max_k |k . vhat(k)|, the solenoidality defect."""
        kdotv = np.sum(self.grid.k_vectors * self.coeffs, axis=0)
        return float(np.max(np.abs(kdotv)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def energy(self) -> float:
        """Kinetic energy 1/2 ||v||_{L2}^2."""
        return 0.5 * self.grid.volume * float(np.sum(np.abs(self.coeffs) ** 2))

    def inner(self, other: "SpectralVelocityField") -> float:
        """L2 inner product (v, w) = int v.w dx, computed in coefficient space."""
        _require_same_grid(self, other)
        return self.grid.volume * float(np.real(np.sum(self.coeffs * np.conj(other.coeffs))))

    def norm_l2(self) -> float:
        return float(np.sqrt(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2)))

    def norm_h1_semi(self) -> float:
        """||grad v||_{L2} via spectral differentiation."""
        return float(
            np.sqrt(self.grid.volume * np.sum(self.grid.k_squared * np.abs(self.coeffs) ** 2))
        )

    def laplacian(self) -> "SpectralVelocityField":
        return SpectralVelocityField(self.grid, -self.grid.k_squared * self.coeffs)

    def gradient_physical(self) -> np.ndarray:
        """Jacobian on the collocation grid, shape (dim, dim, n, ..., n).

        Entry [i, j] holds d v_i / d x_j.
        """
        g = self.grid
        grads = np.empty((g.dim, g.dim) + g.shape)
        for j in range(g.dim):
            dj = 1j * g.k_vectors[j] * self.coeffs
            grads[:, j] = np.real(np.fft.ifftn(dj, axes=g.spatial_axes, norm="forward"))
        return grads


@dataclass(frozen=True)
class PhysicalVelocityField:
    """Velocity samples at the collocation points, shape (dim, n, ..., n)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.grid.dim,) + self.grid.shape
        if self.values.shape != expected:
            raise ConfigurationError(
                f"value shape {self.values.shape} does not match grid {expected}"
            )
        object.__setattr__(self, "values", _freeze(self.values.astype(np.float64, copy=True)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))


def _require_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise UsageError(f"grid mismatch: {a.grid} vs {b.grid}")


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def to_physical(v: SpectralVelocityField) -> PhysicalVelocityField:
    values = np.real(np.fft.ifftn(v.coeffs, axes=v.grid.spatial_axes, norm="forward"))
    return PhysicalVelocityField(v.grid, values)


def to_spectral(v: PhysicalVelocityField) -> SpectralVelocityField:
    coeffs = np.fft.fftn(v.values, axes=v.grid.spatial_axes, norm="forward")
    return SpectralVelocityField(v.grid, coeffs)


def transform(v):
    """Map a field to the other representation (forward o inverse = identity)."""
    if isinstance(v, SpectralVelocityField):
        return to_physical(v)
    if isinstance(v, PhysicalVelocityField):
        return to_spectral(v)
    raise UsageError(f"cannot transform object of type {type(v).__name__}")


# ---------------------------------------------------------------------------
# projections and the convection term
# ---------------------------------------------------------------------------

def leray_project(v: SpectralVelocityField) -> SpectralVelocityField:
    """Modewise orthogonal projection onto divergence-free fields.

    vhat(k) -> (I - k k^T / |k|^2) vhat(k); the k=0 (mean) mode is unchanged.
    """
    return SpectralVelocityField(v.grid, _leray_coeffs(v.grid, v.coeffs))


def _leray_coeffs(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    k = grid.k_vectors
    ksq = grid.k_squared.copy()
    zero = ksq == 0.0
    ksq[zero] = 1.0
    kdotv = np.sum(k * coeffs, axis=0)
    out = coeffs - k * (kdotv / ksq)
    # restore the mean mode untouched
    for c in range(grid.dim):
        out[c][zero] = coeffs[c][zero]
    return out


def galerkin_project(v: SpectralVelocityField, cutoff: int) -> SpectralVelocityField:
    """Zero all modes with max_i |k_i| > cutoff (orthogonal truncation)."""
    if cutoff < 1:
        raise UsageError(f"cutoff must be >= 1, got {cutoff}")
    if cutoff >= v.grid.n // 2:
        return v
    mask = v.grid.infnorm_mask(cutoff)
    return SpectralVelocityField(v.grid, v.coeffs * mask)


def convection(u: SpectralVelocityField, dealias: bool = True) -> SpectralVelocityField:
    """Leray projection of div(u (x) u), evaluated pseudo-spectrally.

    For divergence-free u this is the projected convection term (u.grad)u.
    The 2/3-rule cutoff is applied to the quadratic product so that the
    retained modes are alias-free whenever u itself is dealiased.
    """
    return SpectralVelocityField(
        u.grid, _leray_coeffs(u.grid, _divergence_uu(u, dealias=dealias))
    )


def _divergence_uu(u: SpectralVelocityField, dealias: bool = True) -> np.ndarray:
    g = u.grid
    vals = to_physical(u).values
    out = np.zeros((g.dim,) + g.shape, dtype=np.complex128)
    for i in range(g.dim):
        for j in range(g.dim):
            prod_hat = np.fft.fftn(vals[i] * vals[j], axes=tuple(range(g.dim)), norm="forward")
            out[i] += 1j * g.k_vectors[j] * prod_hat
    if dealias:
        out *= g.dealias_mask
    return out


def trilinear(u: SpectralVelocityField, v: SpectralVelocityField, w) -> float:
    """b(u, v, w) = int (u.grad)v . w dx by collocation quadrature.

    Exact (and hence exactly skew-symmetric in v, w for solenoidal u) when
    all three fields are band-limited with 3*kmax < n. ``w`` may be spectral
    or physical.
    """
    _require_same_grid(u, v)
    g = u.grid
    u_vals = to_physical(u).values
    grad_v = v.gradient_physical()
    if isinstance(w, SpectralVelocityField):
        w_vals = to_physical(w).values
    else:
        w_vals = w.values
    # (u.grad)v_i = sum_j u_j d v_i/d x_j
    advect = np.einsum("j...,ij...->i...", u_vals, grad_v)
    return float(np.sum(advect * w_vals)) * g.cell_volume


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def compute_norm(v, kind: str, p: float | None = None) -> float:
    """Norm of a velocity field.

    kind is one of ``L2``, ``H1_semi``, ``Lp`` (requires ``p``),
    ``Lipschitz_semi`` (max over grid points of the largest singular value of
    the Jacobian, the collocation approximation of |v|_{C^{0,1}}), or ``C0``
    (max pointwise magnitude). Grid-sampled kinds use collocation quadrature.
    """
    spec = v if isinstance(v, SpectralVelocityField) else to_spectral(v)
    if kind == "L2":
        return spec.norm_l2()
    if kind == "H1_semi":
        return spec.norm_h1_semi()
    if kind == "Lp":
        if p is None or p <= 0:
            raise UsageError("Lp norm requires a positive exponent p")
        mag = to_physical(spec).magnitude()
        return float(np.sum(mag**p) * spec.grid.cell_volume) ** (1.0 / p)
    if kind == "Lipschitz_semi":
        return lipschitz_seminorm(spec)
    if kind == "C0":
        return float(np.max(to_physical(spec).magnitude()))
    raise UsageError(f"unknown norm kind {kind!r}")


def lipschitz_seminorm(v: SpectralVelocityField) -> float:
    """max over collocation points of the spectral norm of grad v."""
    return float(np.max(_pointwise_operator_norm(v.gradient_physical())))


def _pointwise_operator_norm(jac: np.ndarray) -> np.ndarray:
    """Largest singular value of a (d, d, ...) field of matrices."""
    d = jac.shape[0]
    if d == 2:
        # closed form via the eigenvalues of G^T G
        a, b = jac[0, 0], jac[0, 1]
        c, e = jac[1, 0], jac[1, 1]
        frob = a * a + b * b + c * c + e * e
        det = a * e - b * c
        disc = np.sqrt(np.maximum(frob * frob - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (frob + disc))
    mats = np.moveaxis(jac.reshape(d, d, -1), -1, 0)
    return np.linalg.norm(mats, ord=2, axis=(1, 2)).reshape(jac.shape[2:])


def symmetric_gradient(v: SpectralVelocityField) -> np.ndarray:
    """(grad v)_sym on the collocation grid, shape (dim, dim, n, ..., n)."""
    jac = v.gradient_physical()
    return 0.5 * (jac + np.swapaxes(jac, 0, 1))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def zero_field(grid: GridSpec) -> SpectralVelocityField:
    return SpectralVelocityField(grid, np.zeros((grid.dim,) + grid.shape, dtype=np.complex128))


def constant_field(grid: GridSpec, vector) -> SpectralVelocityField:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (grid.dim,):
        raise UsageError(f"constant vector must have {grid.dim} components")
    coeffs = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    zero_index = (0,) * grid.dim
    for c in range(grid.dim):
        coeffs[(c,) + zero_index] = vector[c]
    return SpectralVelocityField(grid, coeffs)


def single_mode_field(grid: GridSpec, k, amplitude=None) -> SpectralVelocityField:
    """Real single-wavevector field amplitude * cos(k.x) with amplitude | k.

    If ``amplitude`` is omitted a fixed vector orthogonal to k is used.
    """
    k = np.asarray(k, dtype=int)
    if k.shape != (grid.dim,) or not np.any(k):
        raise UsageError("k must be a nonzero integer wavevector")
    if np.max(np.abs(k)) >= grid.n // 2:
        raise UsageError(f"wavevector {k} not representable on n={grid.n}")
    if amplitude is None:
        amplitude = np.zeros(grid.dim)
        # any vector orthogonal to k: rotate the dominant plane
        if grid.dim == 2:
            amplitude[:] = (-k[1], k[0])
        else:
            trial = np.array([1.0, 0.0, 0.0])
            if abs(np.dot(trial, k)) == np.linalg.norm(k):
                trial = np.array([0.0, 1.0, 0.0])
            amplitude = np.cross(k, trial)
        amplitude = amplitude / np.linalg.norm(amplitude)
    amplitude = np.asarray(amplitude, dtype=float)
    if abs(float(np.dot(amplitude, k))) > 1e-13 * np.linalg.norm(amplitude) * np.linalg.norm(k):
        raise UsageError("amplitude must be orthogonal to k for a solenoidal mode")
    coeffs = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    idx_pos = tuple(int(ki) % grid.n for ki in k)
    idx_neg = tuple(int(-ki) % grid.n for ki in k)
    for c in range(grid.dim):
        coeffs[(c,) + idx_pos] = 0.5 * amplitude[c]
        coeffs[(c,) + idx_neg] = 0.5 * amplitude[c]
    return SpectralVelocityField(grid, coeffs)


def taylor_green_field(grid: GridSpec) -> SpectralVelocityField:
    """The vortex (sin x cos y, -cos x sin y) (extended with 0 in 3d)."""
    x = grid.coordinates
    vals = np.zeros((grid.dim,) + grid.shape)
    vals[0] = np.sin(x[0]) * np.cos(x[1])
    vals[1] = -np.cos(x[0]) * np.sin(x[1])
    return to_spectral(PhysicalVelocityField(grid, vals))


def random_solenoidal_field(
    grid: GridSpec,
    kmax: int,
    rng: np.random.Generator | int,
    amplitude: float = 1.0,
    zero_mean: bool = True,
) -> SpectralVelocityField:
    """Band-limited random divergence-free field with ||v||_L2 = amplitude.

    Deterministic for a fixed seed; built from white noise on the grid so the
    Hermitian symmetry is exact by construction.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    noise = rng.standard_normal((grid.dim,) + grid.shape)
    coeffs = np.fft.fftn(noise, axes=grid.spatial_axes, norm="forward")
    coeffs *= grid.infnorm_mask(min(kmax, grid.dealias_cutoff))
    if zero_mean:
        zero_index = (0,) * grid.dim
        for c in range(grid.dim):
            coeffs[(c,) + zero_index] = 0.0
    out = SpectralVelocityField(grid, _leray_coeffs(grid, coeffs))
    norm = out.norm_l2()
    if norm == 0.0:
        raise UsageError("random field degenerated to zero; enlarge kmax")
    return out * (amplitude / norm)
