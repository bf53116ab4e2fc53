"""Time integration of u_tt + R^s u + m_eps u = f.

The splitting treats the system as the Hamiltonian
H = 1/2 ||p||^2 + 1/2 ||R^{s/2} u||^2 + 1/2 <m u, u>: the free part is
propagated exactly mode by mode, the potential part is the exact kick
p <- p - dt m u.  The Picard-Duhamel solver below is an independent
characterisation of the same solution used as an oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.signal import fftconvolve

from .diagnostics import energy_arrays
from .mass import NEGATIVITY_TOL, NegativeMassError, RegularizedMass
from .spectral import Field, RocklandSymbol
from .structure import BoxGrid, ConfigurationError

SINC_SWITCH = 1e-4


class NumericalFailure(RuntimeError):
    """Non-finite values or a diverging iteration."""


class OracleFailure(NumericalFailure):
    """The Picard iteration did not converge."""


def sin_over(omega: np.ndarray, t: float) -> np.ndarray:
    """sin(omega t) / omega, with a Taylor branch near omega t = 0."""
    omega = np.asarray(omega, dtype=float)
    z = omega * t
    small = np.abs(z) < SINC_SWITCH
    out = np.empty_like(z)
    z2 = z[small] ** 2
    out[small] = t * (1 - z2 / 6 + z2 * z2 / 120)
    out[~small] = np.sin(z[~small]) / omega[~small]
    return out


@lru_cache(maxsize=256)
def _free_coefficients(symbol: RocklandSymbol, grid: BoxGrid, s: float, dt: float):
    omega = symbol.power_on_grid(grid, s / 2)
    c = np.cos(omega * dt)
    so = sin_over(omega, dt)
    return c, so, -omega * np.sin(omega * dt)


def _free(u: np.ndarray, p: np.ndarray, coeffs) -> tuple[np.ndarray, np.ndarray]:
    c, so, ws = coeffs
    uh = np.fft.fftn(u)
    ph = np.fft.fftn(p)
    return np.fft.ifftn(c * uh + so * ph), np.fft.ifftn(ws * uh + c * ph)


def _mass_array(mass) -> Optional[np.ndarray]:
    if mass is None:
        return None
    vals = mass.values if isinstance(mass, RegularizedMass) else np.asarray(mass, dtype=float)
    scale = max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    if np.any(vals < -NEGATIVITY_TOL * scale):
        raise NegativeMassError("mass flow requires m_eps >= 0")
    if not np.any(vals):
        return None
    return vals


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    u: Field
    p: Field
    symbol: RocklandSymbol
    s: float
    mass: Optional[RegularizedMass] = None

    @property
    def grid(self) -> BoxGrid:
        return self.u.grid

    def with_arrays(self, t: float, u: np.ndarray, p: np.ndarray) -> "SolverState":
        return replace(self, t=t, u=Field(self.grid, u), p=Field(self.grid, p))


def free_flow(state: SolverState, dt: float) -> SolverState:
    """Exact flow of u_tt + R^s u = 0 over ``dt`` (which may be negative)."""
    coeffs = _free_coefficients(state.symbol, state.grid, float(state.s), float(dt))
    u, p = _free(state.u.values, state.p.values, coeffs)
    return state.with_arrays(state.t + dt, u, p)


def mass_flow(state: SolverState, dt: float) -> SolverState:
    """Exact flow of the potential part: u fixed, p <- p - dt m_eps u."""
    m = _mass_array(state.mass)
    p = state.p.values if m is None else state.p.values - dt * m * state.u.values
    return state.with_arrays(state.t + dt, state.u.values, p)


def strang_step(state: SolverState, dt: float) -> SolverState:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    half = free_flow(state, dt / 2)
    kicked = mass_flow(half, dt)
    out = free_flow(replace(kicked, t=half.t), dt / 2)
    return replace(out, t=state.t + dt)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    dt: float = math.nan
    steps: int = 0

    @property
    def final(self) -> SolverState:
        return self.states[-1]

    def energy_drift(self) -> float:
        e0 = self.energies[0].total
        return max(abs(e.total - e0) for e in self.energies) / e0 if e0 else 0.0

    def final_drift(self) -> float:
        e0 = self.energies[0].total
        return abs(self.energies[-1].total - e0) / e0 if e0 else 0.0


def default_dt(mass_sup: float, symbol: RocklandSymbol, grid: BoxGrid, s: float, T: float) -> float:
    """min(m_sup^-1/2, max a^-s/2) / 10, capped at T/100, then shrunk to divide T."""
    fastest = float(np.max(symbol.power_on_grid(grid, s / 2)))
    cands = [1.0 / fastest]
    if mass_sup > 0:
        cands.append(1.0 / math.sqrt(mass_sup))
    dt = min(min(cands) / 10, T / 100)
    return T / math.ceil(T / dt - 1e-9)


def step_count(T: float, dt: float) -> int:
    if not T > 0:
        raise ConfigurationError(f"final time must be positive, got {T}")
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigurationError(f"time step {dt} does not divide T={T}")
    return n


Source = Union[Callable[[float], Union[np.ndarray, Field]], np.ndarray, None]


def _integrate(u: np.ndarray, p: np.ndarray, symbol: RocklandSymbol, s: float,
               mass: Optional[RegularizedMass], grid: BoxGrid, T: float, dt: float,
               stride: int, source: Source, keep_states: bool) -> Trajectory:
    n = step_count(T, dt)
    stride = max(1, int(stride))
    m = _mass_array(mass)
    half = _free_coefficients(symbol, grid, float(s), dt / 2)
    full = _free_coefficients(symbol, grid, float(s), dt)
    half_power = symbol.power_on_grid(grid, s / 2)
    cv = grid.cell_volume
    proto = SolverState(0.0, Field(grid, u), Field(grid, p), symbol, float(s), mass)

    traj = Trajectory(dt=dt, steps=n)

    def record(t, u, p):
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise NumericalFailure(f"non-finite solution at t={t:.6g}")
        traj.times.append(t)
        traj.energies.append(energy_arrays(u, p, m, half_power, cv, t))
        if keep_states:
            traj.states.append(proto.with_arrays(t, u, p))

    record(0.0, u, p)
    u, p = _free(u, p, half)
    for k in range(n):
        t_mid = (k + 0.5) * dt
        if m is not None:
            p = p - dt * m * u
        if source is not None:
            f = source[k] if isinstance(source, np.ndarray) else source(t_mid)
            p = p + dt * (f.values if isinstance(f, Field) else np.asarray(f))
        last = k + 1 == n
        if last or (k + 1) % stride == 0:
            u, p = _free(u, p, half)
            record(T if last else (k + 1) * dt, u, p)
            if not last:
                u, p = _free(u, p, half)
        else:
            u, p = _free(u, p, full)
    return traj


def solve(u0: Field, u1: Field, mass: Optional[RegularizedMass], symbol: RocklandSymbol, s: float,
          T: float, dt: Union[float, str] = "auto", snapshot_stride: int = 10,
          keep_states: bool = True) -> Trajectory:
    """Strang-split integration of u_tt + R^s u + m_eps u = 0 up to ``T``."""
    grid = u0.grid
    u0._check(u1)
    if mass is not None and mass.grid != grid:
        raise ConfigurationError("mass and data live on different grids")
    if dt == "auto":
        dt = default_dt(0.0 if mass is None else mass.sup, symbol, grid, s, T)
    return _integrate(u0.values.copy(), u1.values.copy(), symbol, s, mass, grid, T, float(dt),
                      snapshot_stride, None, keep_states)


def inhomogeneous_solve(source: Source, mass: Optional[RegularizedMass], symbol: RocklandSymbol,
                        s: float, T: float, dt: float, grid: Optional[BoxGrid] = None,
                        snapshot_stride: int = 10, keep_states: bool = True) -> Trajectory:
    """Zero-data solve of U_tt + R^s U + m_eps U = f.

    ``source`` is either a callable evaluated once per step, in order, at
    the midpoint times (k + 1/2) dt, or an array of those samples with the
    step index first.  The source enters through the kick, which makes the
    scheme a second-order quadrature of the Duhamel superposition.
    """
    grid = grid or (mass.grid if mass is not None else None)
    if grid is None:
        raise ConfigurationError("inhomogeneous_solve needs a grid")
    zero = np.zeros(grid.shape, dtype=complex)
    return _integrate(zero, zero.copy(), symbol, s, mass, grid, T, float(dt), snapshot_stride,
                      source, keep_states)


class StrangStepper:
    """Single-step Strang integrator exposing the kick-time displacement.

    ``u_mid`` after a call to :meth:`step` is the displacement at which the
    kick was evaluated, i.e. the second-order approximation of
    u(t + dt/2).  Used to feed solution-dependent sources into
    :func:`inhomogeneous_solve` in lockstep.
    """

    def __init__(self, u0: Field, u1: Field, mass: Optional[RegularizedMass], symbol: RocklandSymbol,
                 s: float, dt: float):
        self.grid = u0.grid
        self.u = u0.values.copy()
        self.p = u1.values.copy()
        self.m = _mass_array(mass)
        self.dt = float(dt)
        self.t = 0.0
        self._half = _free_coefficients(symbol, self.grid, float(s), self.dt / 2)
        self.u_mid = None

    def step(self) -> np.ndarray:
        u, p = _free(self.u, self.p, self._half)
        self.u_mid = u
        if self.m is not None:
            p = p - self.dt * self.m * u
        self.u, self.p = _free(u, p, self._half)
        self.t += self.dt
        return self.u_mid


# -- Picard-Duhamel oracle -------------------------------------------------

def duhamel_quadrature(g_hat: np.ndarray, omega: np.ndarray, dtau: float,
                       derivative: bool = False) -> np.ndarray:
    """Trapezoidal Duhamel integral on a uniform time grid.

    Returns I_i = int_0^{tau_i} K(tau_i - sigma) g(sigma) dsigma for every
    time index i (axis 0 of ``g_hat``), with K(t) = sin(omega t)/omega, or
    K(t) = cos(omega t) when ``derivative``.
    """
    n = g_hat.shape[0]
    lags = dtau * np.arange(n).reshape((n,) + (1,) * omega.ndim)
    K = _kernel(omega, lags, derivative)
    conv = fftconvolve(K, g_hat, axes=0)[:n]
    out = conv - 0.5 * K * g_hat[0:1]
    out = out - 0.5 * K[0:1] * g_hat
    return dtau * out


def _kernel(omega: np.ndarray, lags: np.ndarray, derivative: bool) -> np.ndarray:
    if derivative:
        return np.cos(omega * lags) + 0j
    om = np.broadcast_to(omega, np.broadcast_shapes(omega.shape, lags.shape))
    tt = np.broadcast_to(lags, om.shape)
    z = om * tt
    small = np.abs(z) < SINC_SWITCH
    out = np.empty(om.shape)
    out[small] = tt[small] * (1 - z[small] ** 2 / 6)
    out[~small] = np.sin(z[~small]) / om[~small]
    return out + 0j


@dataclass
class PicardInfo:
    iterations: list
    subintervals: int
    dtau: float
    p: Optional[Field] = None


def picard_duhamel_solve(u0: Field, u1: Field, mass: Optional[RegularizedMass], symbol: RocklandSymbol,
                         s: float, T: float, dtau: float, tol: float = 1e-10, max_iter: int = 200,
                         contraction: float = 0.5, full_output: bool = False):
    """u(T) from the fixed point u = FreePart + Duhamel(-m_eps u).

    The interval is split into pieces of length tau with
    tau^2 ||m_eps||_inf <= ``contraction`` and the iteration restarted on
    each piece from the state reached so far.  Iteration stops when
    successive iterates differ by at most ``tol`` (relative) in sup-t L2.
    """
    grid = u0.grid
    n_total = step_count(T, dtau)
    m = _mass_array(mass)
    msup = 0.0 if m is None else float(m.max())
    J = 1
    while True:
        if n_total % J == 0 and (T / J) ** 2 * msup <= contraction:
            break
        J += 1
        if J > n_total:
            raise OracleFailure("cannot split the interval finely enough for a contraction")
    n = n_total // J
    omega = symbol.power_on_grid(grid, s / 2)
    taus = dtau * np.arange(n + 1).reshape((n + 1,) + (1,) * grid.d)
    cosw = np.cos(omega * taus)
    sinw = _kernel(omega, taus, False).real
    wsin = -omega * np.sin(omega * taus)
    axes = tuple(range(1, grid.d + 1))

    uh0 = np.fft.fftn(u0.values)
    ph0 = np.fft.fftn(u1.values)
    iterations = []
    for _ in range(J):
        free_u = cosw * uh0 + sinw * ph0
        uh = free_u
        it = 0
        while True:
            it += 1
            if m is None:
                new = free_u
            else:
                u_phys = np.fft.ifftn(uh, axes=axes)
                g = np.fft.fftn(-m * u_phys, axes=axes)
                new = free_u + duhamel_quadrature(g, omega, dtau)
            diff = np.sqrt(np.sum(np.abs(new - uh) ** 2, axis=axes)).max()
            scale = max(np.sqrt(np.sum(np.abs(new) ** 2, axis=axes)).max(), 1e-300)
            uh = new
            if m is None or diff <= tol * scale:
                break
            if it >= max_iter:
                raise OracleFailure(f"Picard iteration did not converge in {max_iter} steps (diff {diff / scale:.2e})")
        iterations.append(it)
        ph_end = wsin[-1] * uh0 + cosw[-1] * ph0
        if m is not None:
            g = np.fft.fftn(-m * np.fft.ifftn(uh, axes=axes), axes=axes)
            ph_end = ph_end + duhamel_quadrature(g, omega, dtau, derivative=True)[-1]
        uh0, ph0 = uh[-1], ph_end

    u_T = Field(grid, np.fft.ifftn(uh0))
    if full_output:
        return u_T, PicardInfo(iterations, J, dtau, Field(grid, np.fft.ifftn(ph0)))
    return u_T
