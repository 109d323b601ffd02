"""Periodic spectral grid: transforms, operator symbols, and norms.

The spatial domain is the torus [-L, L)^d sampled on n points per axis in
row-major (C) order, standing in for free space; choose L comfortably larger
than the support of the data so wrap-around stays below diagnostic
tolerances.  Wavenumbers follow k_m = pi*m/L for m in [-n/2, n/2) in FFT
layout, so the Laplacian acts diagonally on a field's discrete Fourier
transform as -|k|^2 and the free Schrodinger group ``i dX = Delta X dt`` is
the multiplier exp(i*|k|^2*dt).

Norms use the left-endpoint quadrature h^d * sum, which is exact for
trigonometric polynomials below the Nyquist mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

#: Fraction of spectral mass allowed in the top-decile wavenumber shell
#: before :func:`warn_if_underresolved` fires.
SPECTRAL_TAIL_LIMIT = 1e-8


class SpectralTailWarning(UserWarning):
    """The highest 10% of wavenumbers carry non-negligible spectral mass."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on [-L, L)^d with n points per axis.

    Derived quantities (spacing, wavenumbers, Laplacian symbol input) are
    precomputed once; instances are immutable and safe to share.
    """

    dimension: int
    points: int
    half_length: float

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.points < 4 or not _is_power_of_two(self.points):
            raise ValueError(f"points must be a power of two >= 4, got {self.points}")
        L = float(self.half_length)
        if not (L > 0.0) or not np.isfinite(L):
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        object.__setattr__(self, "half_length", L)

        n = self.points
        d = self.dimension
        spacing = 2.0 * L / n
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "cell_volume", spacing**d)
        object.__setattr__(self, "shape", (n,) * d)
        object.__setattr__(self, "size", n**d)

        # FFT-ordered integer modes scaled to k_m = pi*m/L.
        k1 = np.fft.fftfreq(n, d=1.0 / n) * (np.pi / L)
        object.__setattr__(self, "axis_wavenumbers", k1)
        mesh = np.meshgrid(*([k1] * d), indexing="ij")
        ksq = np.zeros(self.shape)
        for comp in mesh:
            ksq += comp**2
        object.__setattr__(self, "k_squared", ksq.ravel())
        object.__setattr__(self, "axis_coordinates", -L + spacing * np.arange(n))

    def coordinates(self) -> np.ndarray:
        """Grid point coordinates, shape (dimension, n^d), row-major."""
        mesh = np.meshgrid(*([self.axis_coordinates] * self.dimension), indexing="ij")
        return np.stack([m.ravel() for m in mesh])

    def radii(self) -> np.ndarray:
        """Euclidean distance of each grid point from the origin, shape (n^d,)."""
        return np.sqrt((self.coordinates() ** 2).sum(axis=0))


def make_grid(dimension: int, points: int, half_length: float) -> GridSpec:
    """Build a validated periodic grid; rejects unsupported shapes."""
    return GridSpec(dimension, points, half_length)


@dataclass(eq=False)
class ComplexField:
    """Complex amplitudes on a grid, flat row-major storage.

    Entries are checked finite on construction; operations in this module
    return new fields and never mutate their inputs.
    """

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.complex128).reshape(-1)
        if v.size != self.grid.size:
            raise ValueError(
                f"field has {v.size} values, grid expects {self.grid.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite entries")
        self.values = v

    def copy(self) -> "ComplexField":
        return ComplexField(self.values.copy(), self.grid)


# -- transforms ---------------------------------------------------------------

def _fftn_flat(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.fftn(values.reshape(grid.shape)).ravel()


def _ifftn_flat(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.ifftn(values.reshape(grid.shape)).ravel()


def forward_transform(field: ComplexField) -> np.ndarray:
    """Unnormalized DFT of the field, flat row-major spectral coefficients."""
    return _fftn_flat(field.values, field.grid)


def inverse_transform(spectrum: np.ndarray, grid: GridSpec) -> ComplexField:
    """Inverse of :func:`forward_transform`."""
    return ComplexField(_ifftn_flat(np.asarray(spectrum, dtype=np.complex128), grid), grid)


def gradient_spectral(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Spectral gradient of a flat field, shape (dimension, n^d), complex."""
    vh = np.fft.fftn(np.asarray(values, dtype=np.complex128).reshape(grid.shape))
    out = np.empty((grid.dimension, grid.size), dtype=np.complex128)
    for axis in range(grid.dimension):
        shape = [1] * grid.dimension
        shape[axis] = grid.points
        k = grid.axis_wavenumbers.reshape(shape)
        out[axis] = np.fft.ifftn(1j * k * vh).ravel()
    return out


def laplacian_spectral(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Spectral Laplacian of a flat field, shape (n^d,), complex."""
    vh = _fftn_flat(np.asarray(values, dtype=np.complex128), grid)
    return _ifftn_flat(-grid.k_squared * vh, grid)


# -- operator symbols ---------------------------------------------------------

def laplacian_symbol(grid: GridSpec) -> np.ndarray:
    """Diagonal Fourier symbol of the Laplacian, -|k|^2 per mode (all <= 0)."""
    return -grid.k_squared


def free_propagator_apply(field: ComplexField, dt: float) -> ComplexField:
    """Advance a field by the free Schrodinger group over time dt.

    The sign convention ``i dX = Delta X dt`` gives the unitary multiplier
    exp(i*|k|^2*dt); dt may be negative (the adjoint direction).
    """
    vh = _fftn_flat(field.values, field.grid)
    vh *= np.exp(1j * field.grid.k_squared * dt)
    return ComplexField(_ifftn_flat(vh, field.grid), field.grid)


# -- norms --------------------------------------------------------------------

def norm_L2(field: ComplexField) -> float:
    """Cell-volume weighted discrete L^2 norm."""
    return float(np.sqrt(field.grid.cell_volume * np.vdot(field.values, field.values).real))


def norm_Lp(field: ComplexField, p: float) -> float:
    """Cell-volume weighted discrete L^p norm; p = inf means max modulus."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mod = np.abs(field.values)
    if np.isinf(p):
        return float(mod.max())
    return float((field.grid.cell_volume * (mod**p).sum()) ** (1.0 / p))


# -- resolution diagnostics ---------------------------------------------------

def spectral_tail_fraction(field: ComplexField) -> float:
    """Fraction of spectral mass carried by the top 10% of |k| values."""
    vh = forward_transform(field)
    power = np.abs(vh) ** 2
    total = power.sum()
    if total == 0.0:
        return 0.0
    ksq = field.grid.k_squared
    shell = ksq >= (0.81 * ksq.max())  # |k| >= 0.9 * |k|_max
    return float(power[shell].sum() / total)


def warn_if_underresolved(field: ComplexField, context: str = "field") -> float:
    """Emit :class:`SpectralTailWarning` when the spectral tail is heavy."""
    frac = spectral_tail_fraction(field)
    if frac > SPECTRAL_TAIL_LIMIT:
        warnings.warn(
            f"{context}: top 10% of wavenumbers carry {frac:.3e} of spectral "
            f"mass (> {SPECTRAL_TAIL_LIMIT:.0e}); grid may be under-resolved",
            SpectralTailWarning,
            stacklevel=2,
        )
    return frac


# -- field factories ----------------------------------------------------------

def constant_field(grid: GridSpec, value: complex = 1.0) -> ComplexField:
    return ComplexField(np.full(grid.size, value, dtype=np.complex128), grid)


def plane_wave(grid: GridSpec, mode) -> ComplexField:
    """exp(i * sum_a k_a xi_a) with integer mode m_a per axis, k_a = pi*m_a/L."""
    modes = np.broadcast_to(np.asarray(mode, dtype=np.int64), (grid.dimension,))
    xi = grid.coordinates()
    phase = np.zeros(grid.size)
    for axis in range(grid.dimension):
        phase += (np.pi * modes[axis] / grid.half_length) * xi[axis]
    return ComplexField(np.exp(1j * phase), grid)


def gaussian_field(
    grid: GridSpec,
    width: float = 1.0,
    center=0.0,
    amplitude: complex = 1.0,
    l2_norm: float | None = None,
) -> ComplexField:
    """Isotropic Gaussian bump amplitude*exp(-|xi - c|^2 / (2 width^2)).

    When ``l2_norm`` is given the field is rescaled to that discrete L^2 norm.
    """
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
    xi = grid.coordinates()
    r2 = ((xi - c[:, None]) ** 2).sum(axis=0)
    vals = amplitude * np.exp(-r2 / (2.0 * width**2))
    field = ComplexField(vals.astype(np.complex128), grid)
    if l2_norm is not None:
        current = norm_L2(field)
        if current == 0.0:
            raise ValueError("cannot normalize a zero field")
        field = ComplexField(field.values * (l2_norm / current), grid)
    return field
