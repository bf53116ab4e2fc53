"""Geometric epsilon-nets and log-log power-law fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .structure import ConfigurationError


@dataclass(frozen=True)
class EpsilonNet:
    """eps_i = eps0 * ratio**i, i = 0..n-1."""

    eps0: float = 0.5
    ratio: float = 2 ** -0.5
    n: int = 12

    def __post_init__(self):
        if not 0 < self.eps0 <= 1:
            raise ConfigurationError(f"eps0 must lie in (0, 1], got {self.eps0}")
        if not 0 < self.ratio < 1:
            raise ConfigurationError(f"net ratio must lie in (0, 1), got {self.ratio}")
        if self.n < 5:
            raise ConfigurationError(f"an epsilon-net needs at least 5 points, got {self.n}")

    @property
    def values(self) -> np.ndarray:
        return self.eps0 * self.ratio ** np.arange(self.n)

    def __iter__(self):
        return iter(self.values.tolist())

    def __len__(self):
        return self.n

    @property
    def mid_index(self) -> int:
        return (self.n - 1) // 2


@dataclass(frozen=True)
class PowerFit:
    slope: float
    intercept: float
    residual: float

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual}


def fit_exponent(eps: Sequence[float], y: Sequence[float]) -> PowerFit:
    """Least-squares fit of ``log y = slope * log(1/eps) + intercept``.

    ``slope`` is the growth exponent N in ``y ~ eps^-N``; ``residual`` is
    the root-mean-square deviation of the fit in natural-log units.
    """
    eps = np.asarray(eps, dtype=float)
    y = np.asarray(y, dtype=float)
    if eps.shape != y.shape:
        raise ValueError("eps and y must have equal length")
    if eps.size < 5:
        raise ValueError(f"need at least 5 points for an exponent fit, got {eps.size}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("exponent fit needs strictly positive finite values")
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    X = np.log(1.0 / eps)
    Y = np.log(y)
    A = np.column_stack([X, np.ones_like(X)])
    (slope, intercept), *_ = np.linalg.lstsq(A, Y, rcond=None)
    res = Y - (slope * X + intercept)
    return PowerFit(float(slope), float(intercept), float(np.sqrt(np.mean(res ** 2))))
