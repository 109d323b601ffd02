"""Exponential change of variables X = e^M y and the induced potentials.

Dividing out the noise exponential turns the stochastic equation into a
random one whose extra terms are assembled here: an advection field
b = 2 grad M, a zeroth-order field c = sum_a (d_a M)^2 + lap M, and the
damping coefficient gamma(t, xi) = (1/2) sum_j (|mu_j|^2 + mu_j^2)
e_j(xi)^2 V_j(t), whose real part is sum_j (Re mu_j)^2 e_j^2 V_j.

Spatial derivatives of M are taken spectrally from the assembled field (one
differentiation pathway for every profile kind); with constant-one profiles
b and c are exactly zero and gamma is spatially constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalAbort
from .noise_process import MartingalePath, NoiseModel, noise_field
from .spectral_grid import ComplexField, GridSpec, gradient_spectral, laplacian_spectral

#: |Re M| beyond which exp() leaves double range; a path this large has long
#: since left any physically meaningful regime.
OVERFLOW_GUARD = 700.0


def _check_exponent(m_values: np.ndarray) -> None:
    peak = float(np.abs(m_values.real).max())
    if peak > OVERFLOW_GUARD:
        raise NumericalAbort(
            f"|Re M| = {peak:.3g} exceeds the overflow guard {OVERFLOW_GUARD:g}; "
            "the noise path has diverged"
        )


def to_rescaled(x: ComplexField, m_field: ComplexField | np.ndarray) -> ComplexField:
    """y = e^{-M} X, pointwise."""
    m = m_field.values if isinstance(m_field, ComplexField) else np.asarray(m_field)
    _check_exponent(np.atleast_1d(m))
    return ComplexField(x.values * np.exp(-m), x.grid)


def from_rescaled(y: ComplexField, m_field: ComplexField | np.ndarray) -> ComplexField:
    """X = e^{M} y, pointwise; inverse of :func:`to_rescaled`."""
    m = m_field.values if isinstance(m_field, ComplexField) else np.asarray(m_field)
    _check_exponent(np.atleast_1d(m))
    return ComplexField(y.values * np.exp(m), y.grid)


@dataclass
class RescaledPotential:
    """Potential fields induced by the change of variables at one time."""

    b: np.ndarray       # (dimension, n^d) complex advection field, 2 grad M
    c: np.ndarray       # (n^d,) complex, sum (d_a M)^2 + lap M
    gamma: np.ndarray   # (n^d,) complex damping coefficient field


def potential_fields(model: NoiseModel, path: MartingalePath, k: int,
                     grid: GridSpec) -> RescaledPotential:
    """Assemble (b, c, gamma) at time index k of the path."""
    t = path.times[k]
    e = model.sample_profiles(grid)
    v = np.array([dns.evaluate(t) for dns in model.densities], dtype=float)
    coef = 0.5 * (np.abs(model.mu) ** 2 + model.mu**2) * v
    gamma = coef @ (e.astype(np.complex128) ** 2)

    if model.spatially_homogeneous:
        b = np.zeros((grid.dimension, grid.size), dtype=np.complex128)
        c = np.zeros(grid.size, dtype=np.complex128)
        return RescaledPotential(b, c, gamma)

    m_vals = noise_field(model, path, k, grid).field.values
    grad = gradient_spectral(m_vals, grid)
    b = 2.0 * grad
    c = (grad**2).sum(axis=0) + laplacian_spectral(m_vals, grid)
    return RescaledPotential(b, c, gamma)
