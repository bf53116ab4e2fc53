"""Anisotropic dilation structure of R^d and the periodic computational grid."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Invalid structural or numerical configuration."""


def _as_fraction(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, float):
        return Fraction(w).limit_denominator(10**6)
    return Fraction(w)


@dataclass(frozen=True)
class DilationStructure:
    """Dilation weights v_1..v_d of an abelian graded group R^d.

    Weights are held as exact rationals so homogeneity relations such as
    ``2 m_j v_j == nu`` can be compared without float drift.
    """

    weights: tuple[Fraction, ...]

    def __init__(self, weights: Sequence):
        ws = tuple(_as_fraction(w) for w in weights)
        if not ws:
            raise ConfigurationError("at least one dilation weight is required")
        if any(w <= 0 for w in ws):
            raise ConfigurationError(f"dilation weights must be positive, got {weights!r}")
        object.__setattr__(self, "weights", ws)

    @property
    def d(self) -> int:
        return len(self.weights)

    @property
    def Q(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    @property
    def float_weights(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    @classmethod
    def isotropic(cls, d: int) -> "DilationStructure":
        return cls([1] * d)


def homogeneous_dimension(D: DilationStructure) -> Fraction:
    return D.Q


def dilate(x, r: float, D: DilationStructure) -> np.ndarray:
    """Apply D_r: (x_1, .., x_d) -> (r^{v_1} x_1, .., r^{v_d} x_d).

    ``x`` may carry extra leading axes; the last axis is the coordinate axis.
    """
    if not r > 0:
        raise ValueError(f"dilation parameter must be positive, got {r!r}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != D.d:
        raise ValueError(f"point has {x.shape[-1]} coordinates, structure has d={D.d}")
    return x * float(r) ** D.float_weights


@dataclass(frozen=True)
class BoxGrid:
    """Periodic box centred on the origin, with the origin as a grid node.

    Node ``k`` along axis ``j`` sits at ``(k - N_j/2) h_j``; the frequency
    lattice is ``2 pi k / L_j`` for ``k`` in ``-N_j/2 .. N_j/2 - 1``.
    """

    structure: DilationStructure
    extents: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def d(self) -> int:
        return self.structure.d

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.extents, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def origin_index(self) -> tuple[int, ...]:
        return tuple(N // 2 for N in self.counts)

    def axis(self, j: int) -> np.ndarray:
        N, h = self.counts[j], self.spacings[j]
        return (np.arange(N) - N // 2) * h

    def frequency_axis(self, j: int) -> np.ndarray:
        """Angular frequencies along axis j in FFT storage order."""
        N, L = self.counts[j], self.extents[j]
        return 2 * np.pi * np.fft.fftfreq(N, d=1.0 / N) / L

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable node coordinates, one array per axis."""
        return tuple(np.meshgrid(*(self.axis(j) for j in range(self.d)), indexing="ij", sparse=True))

    @cached_property
    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Broadcastable frequency arrays (FFT order), one per axis."""
        return tuple(
            np.meshgrid(*(self.frequency_axis(j) for j in range(self.d)), indexing="ij", sparse=True)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Dense node coordinates with shape ``counts + (d,)``."""
        return np.stack(np.broadcast_arrays(*self.coords), axis=-1)

    def spectral_index(self, k: Sequence[int]) -> tuple[int, ...]:
        """Storage position of the signed frequency index ``k``."""
        if len(k) != self.d:
            raise ValueError("frequency index has wrong dimension")
        out = []
        for kj, N in zip(k, self.counts):
            if not -N // 2 <= kj < N // 2:
                raise ValueError(f"frequency index {kj} outside -{N // 2}..{N // 2 - 1}")
            out.append(kj % N)
        return tuple(out)

    def refined(self, factor: int = 2) -> "BoxGrid":
        """Same box with every count multiplied by ``factor``.

        Coarse nodes are a subset of the refined nodes: coarse index ``i``
        maps to fine index ``factor * i``.
        """
        return make_grid(self.structure, self.extents, [N * factor for N in self.counts])

    def restrict_from(self, fine: "BoxGrid", values: np.ndarray) -> np.ndarray:
        """Sample an array on ``fine`` (a power-of-two refinement) at this grid's nodes."""
        if fine.extents != self.extents:
            raise ValueError("grids cover different boxes")
        slices = []
        for Nc, Nf in zip(self.counts, fine.counts):
            if Nf % Nc:
                raise ValueError("fine grid is not a refinement of this grid")
            slices.append(slice(None, None, Nf // Nc))
        return values[tuple(slices)]

    def describe(self) -> dict:
        return {
            "weights": [str(w) for w in self.structure.weights],
            "extents": list(self.extents),
            "counts": list(self.counts),
        }


def make_grid(D: DilationStructure, extents: Sequence[float], counts: Sequence[int]) -> BoxGrid:
    """Box grid; a single extent or count is broadcast to every axis."""
    try:
        extents = tuple(float(L) for L in np.broadcast_to(np.asarray(extents, dtype=float), (D.d,)))
        counts_arr = np.broadcast_to(np.asarray(counts), (D.d,))
    except ValueError:
        raise ConfigurationError(f"need {D.d} extents and counts, got {list(extents)} and {list(counts)}") from None
    if any(float(N) != int(N) for N in counts_arr):
        raise ConfigurationError(f"grid counts must be integers, got {list(counts_arr)}")
    counts = tuple(int(N) for N in counts_arr)
    for N in counts:
        if N < 4 or N % 2:
            raise ConfigurationError(f"grid counts must be even and >= 4, got {N}")
    for L in extents:
        if not (L > 0 and np.isfinite(L)):
            raise ConfigurationError(f"box extents must be positive, got {L}")
    return BoxGrid(D, extents, counts)
