"""Energy, Sobolev norms and estimate-ratio meters."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .spectral import Field, RocklandSymbol, apply_multiplier, apply_power, l2_norm
from .mass import RegularizedMass, lp_norm
from .structure import ConfigurationError


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    kinetic: float
    elastic: float
    potential: float
    total: float

    @classmethod
    def of(cls, t, kinetic, elastic, potential) -> "EnergyRecord":
        return cls(float(t), float(kinetic), float(elastic), float(potential),
                   float(kinetic) + float(elastic) + float(potential))


def energy_arrays(u: np.ndarray, p: np.ndarray, mass_values: Optional[np.ndarray],
                  half_power: np.ndarray, cell_volume: float, t: float = 0.0) -> EnergyRecord:
    """Energy from raw arrays; ``half_power`` is a(xi)^(s/2) on the grid."""
    kinetic = cell_volume * np.sum(np.abs(p) ** 2)
    elastic = cell_volume * np.sum(np.abs(apply_multiplier(u, half_power)) ** 2)
    potential = 0.0 if mass_values is None else cell_volume * np.sum(mass_values * np.abs(u) ** 2)
    return EnergyRecord.of(t, kinetic, elastic, potential)


def energy(state, mass: Optional[RegularizedMass] = None, symbol: Optional[RocklandSymbol] = None,
           s: Optional[float] = None) -> EnergyRecord:
    """E = ||u_t||^2 + ||R^{s/2} u||^2 + ||sqrt(m) u||^2 for a SolverState."""
    symbol = symbol or state.symbol
    s = state.s if s is None else s
    mass = mass if mass is not None else state.mass
    grid = state.u.grid
    mvals = None if mass is None else mass.values
    return energy_arrays(state.u.values, state.p.values, mvals, symbol.power_on_grid(grid, s / 2),
                         grid.cell_volume, state.t)


def sobolev_dot_norm(f: Field, sigma: float, symbol: RocklandSymbol) -> float:
    """||R^{sigma/nu} f||_{L^2}; plain L^2 at sigma = 0.

    For sigma > 0 the zero mode is annihilated, so the mean of f is invisible.
    """
    if sigma < 0:
        raise ValueError(f"Sobolev order must be nonnegative, got {sigma}")
    return l2_norm(apply_power(symbol, float(sigma) / float(symbol.nu), f))


def sobolev_h_norm(f: Field, sigma: float, symbol: RocklandSymbol) -> float:
    return sobolev_dot_norm(f, sigma, symbol) + l2_norm(f)


def seminorm(u: Field, p: Field, symbol: RocklandSymbol, s: float) -> float:
    """||u||_{H^{s nu/2}} + ||u_t||_{L^2}, the quantity bounded in the a-priori estimates."""
    return sobolev_h_norm(u, s * float(symbol.nu) / 2, symbol) + l2_norm(p)


def _dot_lp(f: Field, order: float, q: float, symbol: RocklandSymbol) -> float:
    g = f if order == 0 else apply_power(symbol, order / float(symbol.nu), f)
    return lp_norm(g, q)


def embedding_target(Q: float, b: float, a_ord: float = 0.0, q_tilde: float = 2.0) -> float:
    """q0 solving b - a = Q (1/q~0 - 1/q0)."""
    inv = 1.0 / q_tilde - (b - a_ord) / Q
    if not 0 < inv < 1.0 / q_tilde:
        raise ConfigurationError(f"no admissible q0 for Q={Q}, b={b}, a={a_ord}, q~0={q_tilde}")
    return 1.0 / inv


def embedding_ratio(f: Field, symbol: RocklandSymbol, b: float, q0: float,
                    a_ord: float = 0.0, q_tilde: float = 2.0) -> float:
    """||f||_{dot L^{q0}_a} / ||f||_{dot L^{q~0}_b}, an empirical embedding constant."""
    Q = float(symbol.structure.Q)
    if not 1 < q_tilde < q0 < math.inf:
        raise ConfigurationError(f"need 1 < q~0 < q0 < inf, got q~0={q_tilde}, q0={q0}")
    if abs((b - a_ord) - Q * (1 / q_tilde - 1 / q0)) > 1e-12 * max(1.0, abs(b - a_ord)):
        raise ConfigurationError(
            f"exponent relation b - a = Q(1/q~0 - 1/q0) violated: {b - a_ord} vs {Q * (1 / q_tilde - 1 / q0)}"
        )
    return _dot_lp(f, a_ord, q0, symbol) / _dot_lp(f, b, q_tilde, symbol)


def estimate_denominator(u0: Field, u1: Field, mass: Optional[RegularizedMass], symbol: RocklandSymbol,
                         s: float, flavor: str = "prop31") -> float:
    nu = float(symbol.nu)
    Q = float(symbol.structure.Q)
    data = l2_norm(u1) + sobolev_h_norm(u0, s * nu / 2, symbol)
    flavor = flavor.lower()
    if flavor == "prop31":
        msup = 0.0 if mass is None else mass.norm(math.inf)
        return (1 + msup) * data
    if flavor == "prop32":
        if not Q > nu * s:
            raise ConfigurationError(f"Prop32 estimate requires Q > nu*s, got Q={Q}, nu*s={nu * s}")
        if mass is None:
            return data
        return (1 + mass.norm(2 * Q / (nu * s))) * math.sqrt(1 + mass.norm(Q / (nu * s))) * data
    raise ConfigurationError(f"unknown estimate flavor {flavor!r}")


def estimate_ratio(trajectory, u0: Field, u1: Field, mass: Optional[RegularizedMass],
                   symbol: RocklandSymbol, s: float, flavor: str = "prop31") -> np.ndarray:
    """LHS(t)/RHS along the trajectory snapshots."""
    denom = estimate_denominator(u0, u1, mass, symbol, s, flavor)
    lhs = np.array([seminorm(st.u, st.p, symbol, s) for st in trajectory.states])
    if denom == 0:
        if np.all(lhs == 0):
            return np.zeros_like(lhs)
        return np.full_like(lhs, math.inf)
    return lhs / denom


def write_series_csv(path, t: Sequence[float], values: Sequence[float], flavor: str,
                     config_hash: str = "", column: str = "value") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# flavor={flavor} config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(["t", column])
        for ti, v in zip(t, values):
            w.writerow([repr(float(ti)), repr(float(v))])
    return path


def write_energy_csv(path, records: Sequence[EnergyRecord]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kinetic", "elastic", "potential", "total"])
        for r in records:
            w.writerow([repr(r.t), repr(r.kinetic), repr(r.elastic), repr(r.potential), repr(r.total)])
    return path
