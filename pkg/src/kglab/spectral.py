"""Discrete Fourier analysis on a BoxGrid: fields, Rockland-type symbols,
fractional powers and convolution.

Transform convention: coefficients are scaled so that the plain l2 norm of
the coefficient array equals the continuum L2 norm of the sampled field,

    sum_k |F_k|^2 = cell_volume * sum_x |f(x)|^2,

and they are phased relative to the box centre (the origin node), so a pure
mode ``exp(i xi_k . x)`` has a real positive coefficient at index ``k``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .structure import BoxGrid, ConfigurationError, DilationStructure, make_grid


class GridMismatchError(ValueError):
    """Operands live on different grids."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function at every node of ``grid``."""

    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("field contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, grid: BoxGrid, func) -> "Field":
        return cls(grid, func(*grid.coords) * np.ones(grid.shape))

    @classmethod
    def zeros(cls, grid: BoxGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: BoxGrid, c: complex) -> "Field":
        return cls(grid, np.full(grid.shape, c, dtype=complex))

    @classmethod
    def delta(cls, grid: BoxGrid) -> "Field":
        """Discrete Dirac mass at the origin: 1/cell_volume at one node."""
        v = np.zeros(grid.shape)
        v[grid.origin_index] = 1.0 / grid.cell_volume
        return cls(grid, v)

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def conj(self) -> "Field":
        return Field(self.grid, self.values.conj())

    def is_real(self, tol: float = 1e-12) -> bool:
        scale = np.max(np.abs(self.values), initial=0.0)
        return bool(np.max(np.abs(self.values.imag), initial=0.0) <= tol * max(scale, 1e-300))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients on the frequency lattice, stored in FFT order."""

    grid: BoxGrid
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError("coefficient array does not match grid")
        object.__setattr__(self, "coefficients", _frozen(c))

    def at(self, k: Sequence[int]) -> complex:
        """Coefficient at the signed frequency index ``k``."""
        return complex(self.coefficients[self.grid.spectral_index(k)])

    def centered(self) -> np.ndarray:
        """Coefficients reordered so index -N/2 comes first."""
        return np.fft.fftshift(self.coefficients)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))


@lru_cache(maxsize=64)
def _phase(grid: BoxGrid) -> np.ndarray:
    sign = np.ones(grid.shape)
    for j, N in enumerate(grid.counts):
        shape = [1] * grid.d
        shape[j] = N
        sign = sign * ((-1.0) ** np.arange(N)).reshape(shape)
    return _frozen(sign)


def forward(f: Field) -> SpectralField:
    g = f.grid
    coeffs = np.fft.fftn(f.values, norm="ortho") * (np.sqrt(g.cell_volume) * _phase(g))
    return SpectralField(g, coeffs)


def inverse(F: SpectralField) -> Field:
    g = F.grid
    vals = np.fft.ifftn(F.coefficients * (_phase(g) / np.sqrt(g.cell_volume)), norm="ortho")
    return Field(g, vals)


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Raw-array Fourier multiplier; the transform normalisation cancels."""
    axes = tuple(range(-multiplier.ndim, 0))
    return np.fft.ifftn(multiplier * np.fft.fftn(values, axes=axes), axes=axes)


@dataclass(frozen=True)
class RocklandSymbol:
    """Diagonal homogeneous symbol a(xi) = sum_j xi_j^(2 m_j).

    The exponents must be compatible with the dilation weights:
    ``2 m_j v_j`` takes the same value ``nu`` (the homogeneous degree) for
    every j, which makes ``a(D_r xi) = r^nu a(xi)``.
    """

    structure: DilationStructure
    exponents: tuple[int, ...]

    def __init__(self, structure: DilationStructure, exponents: Sequence[int]):
        ex = tuple(int(m) for m in exponents)
        if len(ex) != structure.d:
            raise ConfigurationError(f"need {structure.d} exponents, got {len(ex)}")
        if any(m <= 0 or m != e for m, e in zip(ex, exponents)):
            raise ConfigurationError(f"exponents must be positive integers, got {list(exponents)}")
        degrees = {2 * m * v for m, v in zip(ex, structure.weights)}
        if len(degrees) != 1:
            pairs = ", ".join(f"2*{m}*{v}={2 * m * v}" for m, v in zip(ex, structure.weights))
            raise ConfigurationError(f"inhomogeneous symbol: 2 m_j v_j must agree across j ({pairs})")
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "exponents", ex)

    @property
    def nu(self) -> Fraction:
        return 2 * self.exponents[0] * self.structure.weights[0]

    @classmethod
    def laplacian(cls, d: int) -> "RocklandSymbol":
        """Symbol |xi|^2 of the positive Laplacian with isotropic weights."""
        return cls(DilationStructure.isotropic(d), [1] * d)

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.sum(xi ** (2 * np.asarray(self.exponents)), axis=-1)

    def on_grid(self, grid: BoxGrid) -> np.ndarray:
        return _symbol_on_grid(self, grid)

    def power_on_grid(self, grid: BoxGrid, sigma: float) -> np.ndarray:
        """a(xi)^sigma on the lattice, with the zero mode annihilated."""
        return _symbol_power(self, grid, float(sigma))


@lru_cache(maxsize=64)
def _symbol_on_grid(a: RocklandSymbol, grid: BoxGrid) -> np.ndarray:
    if grid.structure != a.structure:
        raise GridMismatchError("symbol and grid use different dilation structures")
    total = 0.0
    for xi, m in zip(grid.frequencies, a.exponents):
        total = total + xi ** (2 * m)
    return _frozen(np.broadcast_to(total, grid.shape).copy())


@lru_cache(maxsize=128)
def _symbol_power(a: RocklandSymbol, grid: BoxGrid, sigma: float) -> np.ndarray:
    vals = a.on_grid(grid)
    out = np.zeros_like(vals)
    nz = vals > 0
    out[nz] = vals[nz] ** sigma
    return _frozen(out)


def symbol_eval(a: RocklandSymbol, xi) -> float:
    return float(a(xi))


def apply_power(a: RocklandSymbol, sigma: float, f: Field) -> Field:
    """Fractional power R^sigma realised as the multiplier a(xi)^sigma."""
    if sigma < 0:
        raise ValueError(f"power must be nonnegative, got {sigma}")
    if sigma == 0:
        return f
    return Field(f.grid, apply_multiplier(f.values, a.power_on_grid(f.grid, sigma)))


def convolve(f: Field, g: Field) -> Field:
    """Periodic convolution cell_volume * sum_y f(y) g(x - y)."""
    f._check(g)
    grid = f.grid
    vals = np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(np.fft.ifftshift(g.values)))
    return Field(grid, grid.cell_volume * vals)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(np.abs(f.values) ** 2)))


def inner(f: Field, g: Field) -> complex:
    f._check(g)
    return complex(f.grid.cell_volume * np.sum(f.values * np.conj(g.values)))


# -- debugging dumps --------------------------------------------------------

def write_field_csv(f: Field, path) -> Path:
    """Node-ordered (row-major) CSV dump with a header naming the grid."""
    path = Path(path)
    g = f.grid
    with path.open("w", newline="") as fh:
        fh.write(
            "# kglab-field weights={} extents={} counts={}\n".format(
                ",".join(str(w) for w in g.structure.weights),
                ",".join(repr(L) for L in g.extents),
                ",".join(str(N) for N in g.counts),
            )
        )
        w = csv.writer(fh)
        w.writerow([f"i{j}" for j in range(g.d)] + [f"x{j}" for j in range(g.d)] + ["re", "im"])
        pts = g.points.reshape(-1, g.d)
        vals = f.values.ravel()
        for n, idx in enumerate(np.ndindex(*g.shape)):
            w.writerow(list(idx) + [repr(float(x)) for x in pts[n]] + [repr(float(vals[n].real)), repr(float(vals[n].imag))])
    return path


def read_field_csv(path) -> Field:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        if not header.startswith("# kglab-field"):
            raise ValueError(f"{path} is not a field dump")
        meta = dict(tok.split("=", 1) for tok in header.split()[2:])
        D = DilationStructure([Fraction(w) for w in meta["weights"].split(",")])
        grid = make_grid(D, [float(x) for x in meta["extents"].split(",")],
                         [int(x) for x in meta["counts"].split(",")])
        rows = list(csv.reader(fh))[1:]
    vals = np.array([complex(float(r[-2]), float(r[-1])) for r in rows]).reshape(grid.shape)
    return Field(grid, vals)
