"""Split-step time integration of the stochastic equation and its rescaled form.

Every non-Laplacian piece of the dynamics is exactly solvable pointwise, so
the only discretization error is operator splitting:

* linear flow: the free propagator multiplier exp(i|k|^2 dt) in Fourier space;
* nonlinear phase: y <- y * exp(-i lam e^{(alpha-1) Re M} |y|^{alpha-1} dt),
  which preserves |y| pointwise (the direct scheme uses Re M = 0, i.e. the
  plain |X|^{alpha-1} rotation);
* damping (rescaled scheme): the pointwise multiplier
  exp(-(1/2) sum_j (|mu_j|^2 + mu_j^2) e_j^2 dQ_j);
* noise (direct scheme): the stochastic exponential
  exp(dM(xi) - (1/2) sum_j (mu_j^2 + |mu_j|^2) e_j^2 dQ_j), exact in
  distribution for the noise-plus-correction sub-flow given the increment.

Strang composition per step: half linear, half phase, full noise-or-damping,
half phase, half linear; the Lie variant composes full sub-flows once.
Noise increments enter per step (piecewise constant in the step), and the
within-step Re M seen by the nonlinear phase is the step-start value.

``simulate`` fuses the trailing and leading half-linear flows of consecutive
steps into one Fourier multiplication and, for spatially constant mid
multipliers, merges the two half phases through the known modulus scaling;
both fusions are algebraically identical to the plain composition and leave
two transforms per step.

The rescaled scheme is restricted to spatially homogeneous noise (all
profiles constant-one), where the linear part stays the free group; spatially
varying profiles integrate in original variables, whose noise sub-flow is
still pointwise exact.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionVeto, NumericalAbort
from .noise_process import MartingalePath, NoiseModel, sample_martingale
from .rescaling import OVERFLOW_GUARD
from .spectral_grid import ComplexField, GridSpec, warn_if_underresolved

SCHEMES = ("direct", "rescaled")
SPLITTINGS = ("lie", "strang")


@dataclass(frozen=True)
class SimParams:
    """Time-stepping parameters for one run.

    lam = 0 turns the nonlinearity off (alpha is then ignored); otherwise
    alpha must sit in the mass-subcritical band 1 < alpha < 1 + 4/d, checked
    against the grid at run time.
    """

    lam: int
    alpha: float
    dt: float
    t_final: float
    save_every: int | None = None
    scheme: str = "rescaled"
    splitting: str = "strang"

    def __post_init__(self):
        if self.lam not in (-1, 0, 1):
            raise ValueError(f"lam must be -1, 0 or +1, got {self.lam}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final <= 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.splitting not in SPLITTINGS:
            raise ValueError(
                f"splitting must be one of {SPLITTINGS}, got {self.splitting!r}"
            )
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(
                f"t_final/dt = {steps:.12g} is not an integer step count"
            )
        if self.save_every is not None and self.save_every < 1:
            raise ValueError(f"save_every must be >= 1, got {self.save_every}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def validate_alpha(self, dimension: int) -> None:
        if self.lam == 0:
            return
        band = 1.0 + 4.0 / dimension
        if not (1.0 < self.alpha < band):
            raise ValueError(
                f"alpha = {self.alpha} outside the band (1, {band}) for d = {dimension}"
            )


@dataclass
class SolutionRecord:
    """Everything one run produced: scalar series at every step, field
    snapshots at save times, and the driving path.

    ``mass_x`` is the squared L^2 norm of the original variable, ``mass_y``
    of the rescaled one; ``re_m`` is sum_j Re(mu_j) M_j(t_k);
    ``ito_mass_sum`` accumulates the discrete stochastic mass integral
    2 sum_j sum_{i<k} Re(mu_j) (integral e_j |X(t_i)|^2) dM_j(i) with the
    same increments that drove the run.
    """

    scheme: str
    times: np.ndarray
    mass_x: np.ndarray
    mass_y: np.ndarray
    re_m: np.ndarray
    ito_mass_sum: np.ndarray
    snapshot_indices: list
    snapshots_x: list
    snapshots_y: list
    path: MartingalePath
    params: SimParams
    seed: int | None
    wall_time: float = 0.0

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.times[self.snapshot_indices]

    @property
    def final_x(self) -> ComplexField:
        return self.snapshots_x[-1]

    @property
    def final_y(self) -> ComplexField:
        return self.snapshots_y[-1]


# -- public sub-flows ------------------------------------------------------------

def nonlinear_phase_step(y: ComplexField, dt: float, lam: int, alpha: float,
                         re_m=0.0) -> ComplexField:
    """Exact nonlinear rotation y * exp(-i lam e^{(alpha-1) re_m} |y|^{alpha-1} dt).

    Preserves the pointwise modulus; lam = 0 is the identity.
    """
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if lam == 0 or dt == 0.0:
        return y.copy()
    scale = np.exp((alpha - 1.0) * np.asarray(re_m, dtype=float))
    amp = np.abs(y.values) ** (alpha - 1.0)
    return ComplexField(y.values * np.exp(-1j * lam * dt * scale * amp), y.grid)


def damping_step(y: ComplexField, model: NoiseModel, path: MartingalePath,
                 k: int, dt: float) -> ComplexField:
    """Exact damping multiplier exp(-(1/2) sum_j (|mu_j|^2+mu_j^2) e_j^2 dQ_j(k)).

    ``dt`` must match the path step (the increment dQ already spans it).
    """
    if not (0 <= k < path.n_steps):
        raise ValueError(f"increment index {k} outside 0..{path.n_steps - 1}")
    if abs(dt - path.dt) > 1e-12 * path.dt:
        raise ValueError(f"dt = {dt} does not match the path step {path.dt}")
    e = model.sample_profiles(y.grid)
    coef = 0.5 * (np.abs(model.mu) ** 2 + model.mu**2)
    exponent = -(coef * path.dqv[:, k]) @ (e.astype(np.complex128) ** 2)
    if np.abs(exponent.real).max() > OVERFLOW_GUARD:
        raise NumericalAbort("damping exponent exceeds the overflow guard", time_index=k)
    return ComplexField(y.values * np.exp(exponent), y.grid)


def noise_step_direct(x: ComplexField, model: NoiseModel, path: MartingalePath,
                      k: int) -> ComplexField:
    """Exact noise-plus-correction multiplier for step k of the direct scheme:
    exp(dM(xi) - (1/2) sum_j (mu_j^2 + |mu_j|^2) e_j^2 dQ_j(k)).
    """
    if not (0 <= k < path.n_steps):
        raise ValueError(f"increment index {k} outside 0..{path.n_steps - 1}")
    e = model.sample_profiles(x.grid).astype(np.complex128)
    dm = model.mu * path.increments[:, k]
    corr = 0.5 * (model.mu**2 + np.abs(model.mu) ** 2) * path.dqv[:, k]
    exponent = dm @ e - corr @ e**2
    if np.abs(exponent.real).max() > OVERFLOW_GUARD:
        raise NumericalAbort("noise exponent exceeds the overflow guard", time_index=k)
    return ComplexField(x.values * np.exp(exponent), x.grid)


# -- the composed kernel -----------------------------------------------------------

class _Stepper:
    """Precomputed split-step coefficients bound to (grid, model, params, path)."""

    def __init__(self, grid: GridSpec, model: NoiseModel, params: SimParams,
                 path: MartingalePath):
        self.grid = grid
        self.shape = grid.shape
        self.params = params
        self.model = model
        self.path = path
        self.homogeneous = model.spatially_homogeneous
        dt = params.dt
        ksq = grid.k_squared
        self.lin_half = np.exp(1j * ksq * (0.5 * dt))
        self.lin_full = self.lin_half * self.lin_half
        self.pow_half = 0.5 * (params.alpha - 1.0)
        self.phase_on = params.lam != 0
        mu = model.mu
        n_steps = path.n_steps

        # sum_j Re(mu_j) M_j and sum_j mu_j M_j at every grid time.
        self.re_m = path.real_part_series(mu)
        self.m_scalar = path.complex_series(mu)

        if params.scheme == "rescaled":
            coef = 0.5 * (np.abs(mu) ** 2 + mu**2)
            self.mid_scalar = np.exp(-(coef @ path.dqv))
        elif self.homogeneous:
            expo = mu @ path.increments.astype(np.complex128) \
                - (0.5 * (mu**2 + np.abs(mu) ** 2)) @ path.dqv
            self.mid_scalar = np.exp(expo)
        else:
            self.mid_scalar = None
            e = model.sample_profiles(grid)
            self.e_values = e
            self.mu_e = mu[:, None] * e
            self.corr_base = 0.5 * ((mu**2 + np.abs(mu) ** 2)[:, None] * e**2)

        if self.phase_on:
            if params.scheme == "rescaled":
                scale = params.lam * np.exp((params.alpha - 1.0) * self.re_m[:-1])
            else:
                scale = np.full(n_steps, float(params.lam))
            self.phase_half = scale * (0.5 * dt)
            self.phase_full = scale * dt
            if self.mid_scalar is not None:
                # |mid|^{alpha-1} folds the second half phase into the first.
                mod = np.abs(self.mid_scalar) ** (params.alpha - 1.0)
                self.phase_fused = self.phase_half * (1.0 + mod)

    def _lin(self, v: np.ndarray, mult: np.ndarray) -> np.ndarray:
        vh = np.fft.fftn(v.reshape(self.shape)).ravel()
        vh *= mult
        return np.fft.ifftn(vh.reshape(self.shape)).ravel()

    def _amp_pow(self, v: np.ndarray) -> np.ndarray:
        amp = v.real**2 + v.imag**2
        if self.pow_half != 1.0:
            amp = amp**self.pow_half
        return amp

    def _phase(self, v: np.ndarray, coef: float) -> np.ndarray:
        v *= np.exp(self._amp_pow(v) * (-1j * coef))
        return v

    def _noise_field_mult(self, v: np.ndarray, k: int) -> np.ndarray:
        expo = self.path.increments[:, k] @ self.mu_e \
            - self.path.dqv[:, k] @ self.corr_base
        if np.abs(expo.real).max() > OVERFLOW_GUARD:
            raise NumericalAbort("noise exponent exceeds the overflow guard",
                                 time_index=k)
        v *= np.exp(expo)
        return v

    def _mid(self, v: np.ndarray, k: int) -> np.ndarray:
        if self.mid_scalar is not None:
            v *= self.mid_scalar[k]
            return v
        return self._noise_field_mult(v, k)

    def check_guard(self, k: int) -> None:
        if self.homogeneous and abs(self.re_m[k]) > OVERFLOW_GUARD:
            raise NumericalAbort(
                f"|Re M| exceeds the overflow guard at time index {k}", time_index=k
            )

    def advance(self, v: np.ndarray, k: int) -> np.ndarray:
        """One plain (unfused) step t_k -> t_{k+1}; consumes increment k."""
        self.check_guard(k + 1)
        if self.params.splitting == "strang":
            v = self._lin(v, self.lin_half)
            if self.phase_on:
                v = self._phase(v, self.phase_half[k])
            v = self._mid(v, k)
            if self.phase_on:
                v = self._phase(v, self.phase_half[k])
            return self._lin(v, self.lin_half)
        v = self._lin(v, self.lin_full)
        if self.phase_on:
            v = self._phase(v, self.phase_full[k])
        return self._mid(v, k)

    def m_field_values(self, k: int) -> np.ndarray:
        """M(t_k, xi) as a flat complex array (scalar broadcast when homogeneous)."""
        if self.homogeneous:
            return np.full(self.grid.size, self.m_scalar[k])
        return self.path.values[:, k] @ self.mu_e


def step(state: ComplexField, path: MartingalePath, k: int, params: SimParams,
         model: NoiseModel) -> ComplexField:
    """Advance one state by one step (contract surface; runs keep the kernel)."""
    if params.scheme == "rescaled" and not model.spatially_homogeneous:
        raise AssumptionVeto("scheme=rescaled requires constant-one noise profiles")
    stepper = _Stepper(state.grid, model, params, path)
    return ComplexField(stepper.advance(state.values.copy(), k), state.grid)


# -- full runs ----------------------------------------------------------------------

def simulate(grid: GridSpec, model: NoiseModel, params: SimParams,
             x: ComplexField, seed: int = 0,
             path: MartingalePath | None = None) -> SolutionRecord:
    """Integrate from x over [0, t_final] and record the run.

    The noise path is sampled once from (model, dt, n_steps, seed) unless one
    is supplied, so paired runs can share it.  Scalar series (masses, Re M,
    the stochastic mass sum) are recorded at every step; field snapshots every
    ``save_every`` steps (default about 512 over the run).
    """
    if x.grid is not grid and x.grid != grid:
        raise ValueError("initial state lives on a different grid")
    params.validate_alpha(grid.dimension)
    if params.scheme == "rescaled" and not model.spatially_homogeneous:
        raise AssumptionVeto(
            "scheme=rescaled requires constant-one noise profiles (set "
            "noise.profiles to constant-one or use scheme=direct)"
        )
    n_steps = params.n_steps
    if path is None:
        path = sample_martingale(model, params.dt, n_steps, seed)
    else:
        if path.n_steps != n_steps:
            raise ValueError(
                f"supplied path has {path.n_steps} steps, run needs {n_steps}"
            )
        if abs(path.dt - params.dt) > 1e-12 * params.dt:
            raise ValueError(f"supplied path step {path.dt} != dt {params.dt}")
    warn_if_underresolved(x, "initial state")

    t0 = time.perf_counter()
    stepper = _Stepper(grid, model, params, path)
    save_every = params.save_every or max(1, math.ceil(n_steps / 512))
    save_set = set(range(0, n_steps + 1, save_every))
    save_set.add(n_steps)
    run = _RunState(grid, stepper, params, n_steps, save_set)

    if params.splitting == "strang":
        _strang_loop(run, x, stepper, n_steps)
    else:
        _lie_loop(run, x, stepper, n_steps)

    wall = time.perf_counter() - t0
    warn_if_underresolved(run.snapshots_x[-1], "final state")
    return SolutionRecord(
        scheme=params.scheme,
        times=path.times.copy(),
        mass_x=run.mass_x,
        mass_y=run.mass_y,
        re_m=stepper.re_m.copy(),
        ito_mass_sum=run.ito,
        snapshot_indices=run.snapshot_indices,
        snapshots_x=run.snapshots_x,
        snapshots_y=run.snapshots_y,
        path=path,
        params=params,
        seed=seed,
        wall_time=wall,
    )


class _RunState:
    """Per-step recording shared by both splitting loops."""

    def __init__(self, grid: GridSpec, stepper: _Stepper, params: SimParams,
                 n_steps: int, save_set: set):
        self.grid = grid
        self.stepper = stepper
        self.direct = params.scheme == "direct"
        self.cv = grid.cell_volume
        self.save_set = save_set
        self.mass_x = np.empty(n_steps + 1)
        self.mass_y = np.empty(n_steps + 1)
        self.ito = np.zeros(n_steps + 1)
        self.snapshot_indices: list[int] = []
        self.snapshots_x: list[ComplexField] = []
        self.snapshots_y: list[ComplexField] = []
        # 2 sum_j Re(mu_j) dM_j(k), the homogeneous stochastic-sum weights.
        self.s_incr = 2.0 * (stepper.model.mu.real @ stepper.path.increments)

    def mass_of(self, values: np.ndarray) -> float:
        return self.cv * float(np.vdot(values, values).real)

    def record(self, k: int, v: np.ndarray, mass: float) -> None:
        """Record time index k given the physical state and its mass."""
        if not np.isfinite(mass):
            raise NumericalAbort(f"non-finite state at time index {k}", time_index=k)
        stepper = self.stepper
        rm = stepper.re_m[k]
        try:
            if self.direct:
                self.mass_x[k] = mass
                if stepper.homogeneous:
                    self.mass_y[k] = math.exp(-2.0 * rm) * mass
                else:
                    self.mass_y[k] = self.mass_of(
                        v * np.exp(-stepper.m_field_values(k)))
            else:
                self.mass_y[k] = mass
                self.mass_x[k] = math.exp(2.0 * rm) * mass
        except OverflowError as exc:
            raise NumericalAbort(
                f"mass reconstruction overflows at time index {k}", time_index=k
            ) from exc
        if not (np.isfinite(self.mass_x[k]) and np.isfinite(self.mass_y[k])):
            raise NumericalAbort(f"non-finite mass at time index {k}", time_index=k)
        if k in self.save_set:
            if self.direct:
                xf = ComplexField(v.copy(), self.grid)
                yf = ComplexField(v * np.exp(-stepper.m_field_values(k)), self.grid)
            else:
                yf = ComplexField(v.copy(), self.grid)
                xf = ComplexField(v * np.exp(stepper.m_scalar[k]), self.grid)
            self.snapshot_indices.append(k)
            self.snapshots_x.append(xf)
            self.snapshots_y.append(yf)

    def accumulate_ito(self, k: int, phys: np.ndarray | None) -> None:
        """Stochastic mass sum increment for step k (left endpoint)."""
        stepper = self.stepper
        if stepper.homogeneous:
            self.ito[k + 1] = self.ito[k] + self.s_incr[k] * self.mass_x[k]
        else:
            amp2 = phys.real**2 + phys.imag**2
            w = self.cv * (stepper.e_values @ amp2)
            mu_re = stepper.model.mu.real
            self.ito[k + 1] = self.ito[k] + 2.0 * float(
                (mu_re * stepper.path.increments[:, k]) @ w
            )


def _strang_loop(run: _RunState, x: ComplexField, stepper: _Stepper,
                 n_steps: int) -> None:
    """Fused strang march: spectral state at integer times, two transforms
    per step, masses by Parseval."""
    grid = run.grid
    shape = grid.shape
    half = stepper.lin_half
    parseval = grid.cell_volume / grid.size
    phase_on = stepper.phase_on
    fused = stepper.mid_scalar is not None
    phys = x.values.copy()

    yh = np.fft.fftn(phys.reshape(shape)).ravel()
    run.record(0, phys, run.mass_of(phys))
    for k in range(n_steps):
        stepper.check_guard(k + 1)
        run.accumulate_ito(k, phys)
        u = np.fft.ifftn((half * yh).reshape(shape)).ravel()
        if fused:
            if phase_on:
                u *= np.exp(stepper._amp_pow(u) * (-1j * stepper.phase_fused[k]))
            u *= stepper.mid_scalar[k]
        else:
            if phase_on:
                u = stepper._phase(u, stepper.phase_half[k])
            u = stepper._noise_field_mult(u, k)
            if phase_on:
                u = stepper._phase(u, stepper.phase_half[k])
        yh = half * np.fft.fftn(u.reshape(shape)).ravel()
        mass = parseval * float(np.vdot(yh, yh).real)
        need_phys = (k + 1 in run.save_set) or not stepper.homogeneous
        if need_phys:
            phys = np.fft.ifftn(yh.reshape(shape)).ravel()
            run.record(k + 1, phys, mass)
        else:
            run.record(k + 1, None, mass)


def _lie_loop(run: _RunState, x: ComplexField, stepper: _Stepper,
              n_steps: int) -> None:
    v = x.values.copy()
    run.record(0, v, run.mass_of(v))
    for k in range(n_steps):
        run.accumulate_ito(k, v)
        v = stepper.advance(v, k)
        run.record(k + 1, v, run.mass_of(v))
