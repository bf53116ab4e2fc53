"""Initial-data recipes.

A recipe is evaluated on any grid covering the same box, so a sweep that
refines the grid per epsilon keeps solving with the same continuum data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .spectral import Field
from .structure import BoxGrid, ConfigurationError

BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class Gaussian:
    """u0 = A exp(-|x|^2 / (2 w^2)), u1 = V exp(-|x|^2 / (2 w^2))."""

    amplitude: float = 1.0
    width: float = 0.5
    velocity: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigurationError(f"gaussian width must be positive, got {self.width}")

    def __call__(self, grid: BoxGrid) -> tuple[Field, Field]:
        r2 = sum(x * x for x in grid.coords)
        g = np.broadcast_to(np.exp(-r2 / (2 * self.width ** 2)), grid.shape)
        u0 = Field(grid, self.amplitude * g)
        u1 = Field(grid, self.velocity * g)
        check_boundary_decay(u0)
        check_boundary_decay(u1)
        return u0, u1

    localized = True


@dataclass(frozen=True)
class PlaneWave:
    """u0 = A exp(i xi_k . x) for the lattice index ``mode``; u1 = 0 or i omega u0 (travelling).

    With ``real`` the cosine is used instead, keeping the data real.
    """

    mode: tuple = (1,)
    amplitude: float = 1.0
    real: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", tuple(int(k) for k in self.mode))

    def phase(self, grid: BoxGrid) -> np.ndarray:
        if len(self.mode) != grid.d:
            raise ConfigurationError(f"plane-wave mode {self.mode} does not match dimension {grid.d}")
        for k, N in zip(self.mode, grid.counts):
            if not -N // 2 <= k < N // 2:
                raise ConfigurationError(f"plane-wave mode {self.mode} is not on the lattice")
        return sum(2 * math.pi * k / L * x for k, L, x in zip(self.mode, grid.extents, grid.coords))

    def __call__(self, grid: BoxGrid) -> tuple[Field, Field]:
        th = np.broadcast_to(self.phase(grid), grid.shape)
        u0 = self.amplitude * (np.cos(th) if self.real else np.exp(1j * th))
        return Field(grid, u0), Field.zeros(grid)

    localized = False


@dataclass(frozen=True)
class RandomBandlimited:
    """Random real trigonometric polynomial with modes |k_j| <= ``max_mode``.

    Coefficients are drawn once from ``seed`` and do not depend on the
    grid resolution; the grid must satisfy max_mode <= N_j / 4.
    """

    seed: int = 0
    max_mode: int = 4
    amplitude: float = 1.0
    velocity: bool = True

    def _coefficients(self, d: int):
        rng = np.random.default_rng(self.seed)
        shape = (2 * self.max_mode + 1,) * d
        out = []
        for _ in range(2 if self.velocity else 1):
            out.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        return out

    def __call__(self, grid: BoxGrid) -> tuple[Field, Field]:
        for N in grid.counts:
            if self.max_mode > N // 4:
                raise ConfigurationError(
                    f"random_bandlimited max_mode={self.max_mode} exceeds N/4={N // 4}; band-limited fields use at most a quarter of the spectrum"
                )
        K = self.max_mode
        ks = np.arange(-K, K + 1)
        fields = []
        for c in self._coefficients(grid.d):
            v = c
            for j in range(grid.d):
                x = grid.axis(j)
                basis = np.exp(2j * math.pi * np.outer(ks, x) / grid.extents[j])
                v = np.tensordot(v, basis, axes=([0], [0]))
            v = v.real * self.amplitude / math.sqrt(c.size)
            fields.append(Field(grid, v))
        if len(fields) == 1:
            fields.append(Field.zeros(grid))
        return fields[0], fields[1]

    localized = False


DataRecipe = Union[Gaussian, PlaneWave, RandomBandlimited]


def check_boundary_decay(f: Field, tol: float = BOUNDARY_TOL) -> float:
    """Largest boundary-face value relative to the peak; raises above ``tol``."""
    a = np.abs(f.values)
    peak = float(a.max(initial=0.0))
    if peak == 0.0:
        return 0.0
    edge = 0.0
    for j in range(f.grid.d):
        face = np.take(a, 0, axis=j)
        edge = max(edge, float(face.max()))
    rel = edge / peak
    if rel > tol:
        raise ConfigurationError(
            f"initial data is {rel:.2e} of its peak on the box boundary (limit {tol:.0e}); enlarge the box"
        )
    return rel


def make_data(preset: str, **params) -> DataRecipe:
    presets = {"gaussian": Gaussian, "plane_wave": PlaneWave, "random_bandlimited": RandomBandlimited}
    if preset not in presets:
        raise ConfigurationError(f"unknown data preset {preset!r}; choose from {sorted(presets)}")
    try:
        return presets[preset](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for data preset {preset!r}: {exc}") from None


def plane_wave_exact(grid: BoxGrid, mode: Sequence[int], omega: float, t: float, amplitude: float = 1.0) -> np.ndarray:
    """Closed-form solution for plane-wave data with zero velocity: cos(omega t) u0."""
    th = sum(2 * math.pi * k / L * x for k, L, x in zip(mode, grid.extents, grid.coords))
    return np.broadcast_to(amplitude * math.cos(omega * t) * np.exp(1j * th), grid.shape)
