"""Singular masses, Friedrichs mollifiers and their regularisations."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from .fitting import EpsilonNet, PowerFit, fit_exponent
from .spectral import Field, convolve
from .structure import BoxGrid, ConfigurationError, DilationStructure, dilate, make_grid

NEGATIVITY_TOL = 1e-12


class ResolutionError(ValueError):
    """A mollifier is too narrow (or too wide) for the grid."""


class NegativeMassError(ValueError):
    """A regularised mass took clearly negative values."""


# -- mollifier --------------------------------------------------------------

def _bump(r2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=None)
def _bump_integral(d: int) -> float:
    sphere = 2 * math.pi ** (d / 2) / special.gamma(d / 2)
    radial, _ = integrate.quad(lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
                               epsabs=1e-15, epsrel=1e-13, limit=200)
    return sphere * radial


def midpoint_bump_integral(d: int, n: int) -> float:
    """Midpoint-rule integral of the unnormalised bump over [-1, 1]^d.

    Independent of the radial quadrature used for the cached constant; kept
    as its cross-check.
    """
    h = 2.0 / n
    x = -1.0 + h * (np.arange(n) + 0.5)
    r2 = 0.0
    for j in range(d):
        shape = [1] * d
        shape[j] = n
        r2 = r2 + (x ** 2).reshape(shape)
    return float(_bump(np.broadcast_to(r2, (n,) * d).copy()).sum() * h ** d)


@dataclass(frozen=True)
class MollifierProfile:
    """psi(x) = c exp(-1/(1 - |x|^2)) on the unit ball, normalised to unit mass."""

    d: int

    @property
    def constant(self) -> float:
        return 1.0 / _bump_integral(self.d)

    @property
    def sup(self) -> float:
        return self.constant * math.exp(-1.0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.constant * _bump(np.sum(x * x, axis=-1))


def support_halfwidths(eps: float, D: DilationStructure) -> np.ndarray:
    return eps ** D.float_weights


def check_resolution(eps: float, D: DilationStructure, grid: BoxGrid, min_nodes: float = 4):
    half = support_halfwidths(eps, D)
    for j, (w, L, h) in enumerate(zip(half, grid.extents, grid.spacings)):
        if w >= L / 2:
            raise ResolutionError(f"eps={eps:g}: support half-width {w:g} on axis {j} exceeds box half-width {L / 2:g}")
        if 2 * w / h < min_nodes:
            raise ResolutionError(
                f"eps={eps:g}: support spans {2 * w / h:.2f} cells on axis {j}, need {min_nodes}"
            )


def resolving_grid(base: BoxGrid, eps: float, min_nodes: float = 4, max_count: int = 4096) -> BoxGrid:
    """Coarsest per-axis power-of-two refinement of ``base`` resolving psi_eps."""
    half = support_halfwidths(eps, base.structure)
    counts = list(base.counts)
    for j, w in enumerate(half):
        if w >= base.extents[j] / 2:
            raise ResolutionError(f"eps={eps:g}: support exceeds the box on axis {j}")
        while 2 * w * counts[j] / base.extents[j] < min_nodes:
            counts[j] *= 2
            if counts[j] > max_count:
                raise ResolutionError(
                    f"eps={eps:g}: axis {j} needs more than {max_count} nodes to resolve the mollifier"
                )
    return make_grid(base.structure, base.extents, counts)


def mollifier_scale(psi: MollifierProfile, eps: float, D: DilationStructure, grid: BoxGrid,
                    min_nodes: float = 4, normalize: bool = True) -> Field:
    """Sample psi_eps(x) = eps^-Q psi(D_{1/eps} x) on ``grid``.

    With ``normalize`` the samples are rescaled so their quadrature mass is
    exactly one; the correction is the midpoint-rule error of the bump.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if psi.d != D.d or grid.structure != D:
        raise ConfigurationError("mollifier, structure and grid disagree on dimension")
    check_resolution(eps, D, grid, min_nodes)
    vals = eps ** (-float(D.Q)) * psi(dilate(grid.points, 1.0 / eps, D))
    if normalize:
        vals = vals / (grid.cell_volume * vals.sum())
    return Field(grid, vals)


# -- mass specifications ----------------------------------------------------

@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class Bounded:
    """Closed-form bounded mass.

    ``shape`` is one of ``gaussian`` (A exp(-|x|^2 / (2 w^2))), ``constant``
    (A), ``cosine`` (A (1 + cos(k x_1)) / 2, band-limited) or ``box``
    (A on max_j |x_j| < w, an L-infinity mass that is not continuous).
    """

    shape: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    wavenumber: float = 1.0
    regularity: str = "C0"

    def __post_init__(self):
        if self.shape not in ("gaussian", "constant", "cosine", "box"):
            raise ConfigurationError(f"unknown bounded mass shape {self.shape!r}")
        if self.regularity not in ("C0", "Linf"):
            raise ConfigurationError(f"regularity must be 'C0' or 'Linf', got {self.regularity!r}")
        if self.amplitude < 0:
            raise ConfigurationError("mass amplitude must be nonnegative")
        if self.shape == "box" and self.regularity == "C0":
            object.__setattr__(self, "regularity", "Linf")

    def evaluate(self, grid: BoxGrid) -> np.ndarray:
        X = grid.coords
        if self.shape == "gaussian":
            r2 = sum(x * x for x in X)
            v = self.amplitude * np.exp(-r2 / (2 * self.width ** 2))
        elif self.shape == "constant":
            v = self.amplitude
        elif self.shape == "cosine":
            v = self.amplitude * 0.5 * (1 + np.cos(self.wavenumber * X[0]))
        else:
            inside = np.ones(grid.shape, dtype=bool)
            for x in X:
                inside = inside & (np.abs(x) < self.width)
            v = self.amplitude * inside
        return np.broadcast_to(np.asarray(v, dtype=float), grid.shape).copy()


@dataclass(frozen=True)
class DiracDelta:
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigurationError("delta weight must be nonnegative")


@dataclass(frozen=True)
class DeltaSquared:
    pass


@dataclass(frozen=True)
class InversePower:
    """|x|_D^-gamma with the homogeneous norm |x|_D = (sum_j |x_j|^(2/v_j))^(1/2),
    capped inside ``cap_radius`` so nodal values stay finite."""

    gamma: float
    cap_radius: float = 0.05

    def __post_init__(self):
        if self.gamma <= 0 or self.cap_radius <= 0:
            raise ConfigurationError("inverse power needs gamma > 0 and cap_radius > 0")

    @property
    def cap(self) -> float:
        return self.cap_radius ** -self.gamma

    def evaluate(self, grid: BoxGrid) -> np.ndarray:
        w = grid.structure.float_weights
        r2 = sum(np.abs(x) ** (2.0 / wj) for x, wj in zip(grid.coords, w))
        r = np.maximum(np.sqrt(np.broadcast_to(r2, grid.shape)), self.cap_radius)
        return r ** -self.gamma

    def admissible(self, Q: float, p: float) -> bool:
        """Whether the uncapped mass is locally L^p: gamma * p < Q."""
        if math.isinf(p):
            return False
        return self.gamma * p < Q


@dataclass(frozen=True)
class Perturbed:
    """Base mass plus a constant negligible net, by default exp(-1/eps)."""

    base: "MassSpec"
    kind: str = "exp"

    def __post_init__(self):
        if self.kind not in ("exp", "none"):
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")

    def amount(self, eps: float) -> float:
        """exp(-1/eps) for kind ``exp``; zero for ``none`` (identical nets)."""
        return math.exp(-1.0 / eps) if self.kind == "exp" else 0.0


MassSpec = Union[Zero, Bounded, DiracDelta, DeltaSquared, InversePower, Perturbed]


def mass_tag(spec) -> str:
    return {Zero: "zero", Bounded: "bounded", DiracDelta: "dirac", DeltaSquared: "delta_squared",
            InversePower: "inverse_power", Perturbed: "perturbed"}[type(spec)]


def is_singular(spec) -> bool:
    if isinstance(spec, Perturbed):
        return is_singular(spec.base)
    return isinstance(spec, (DiracDelta, DeltaSquared, InversePower))


@dataclass(frozen=True, eq=False)
class RegularizedMass:
    """m_eps on a grid, with the L^p norms used by the a-priori estimates.

    ``perturbation`` holds the constant added by a ``Perturbed`` spec
    separately, so differences m~_eps - m_eps are available without
    cancellation.
    """

    spec: object
    eps: float
    field: Field
    norms: dict = field(default_factory=dict)
    perturbation: float = 0.0
    cap: Optional[float] = None

    @property
    def grid(self) -> BoxGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values.real

    @property
    def sup(self) -> float:
        return float(np.max(self.values))

    def norm(self, p: float) -> float:
        if p not in self.norms:
            self.norms[p] = lp_norm(self.field, p)
        return self.norms[p]

    def restricted(self, grid: BoxGrid) -> "RegularizedMass":
        """Same mass sampled on a coarser grid (nodes must be shared)."""
        vals = grid.restrict_from(self.grid, self.values)
        return RegularizedMass(self.spec, self.eps, Field(grid, vals), {}, self.perturbation, self.cap)

    @classmethod
    def exact(cls, spec: Bounded, grid: BoxGrid) -> "RegularizedMass":
        """The unregularised bounded mass (eps = 0)."""
        return cls(spec, 0.0, Field(grid, spec.evaluate(grid)))


def norm_exponents(Q: float, nu_s: Optional[float] = None) -> list[float]:
    ps = [1.0, 2.0, math.inf]
    if nu_s:
        ps += [Q / nu_s, 2 * Q / nu_s]
    return sorted({p for p in ps if p >= 1})


def _checked_nonnegative(vals: np.ndarray, eps: float) -> np.ndarray:
    vals = np.real_if_close(vals, tol=1e6)
    vals = np.asarray(vals.real, dtype=float)
    tol = NEGATIVITY_TOL * max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    if np.any(vals < -tol):
        raise NegativeMassError(f"eps={eps:g}: regularised mass reaches {vals.min():.3e}")
    return np.where(vals < 0, 0.0, vals)


def regularize(spec, eps: float, grid: BoxGrid, psi: Optional[MollifierProfile] = None,
               min_nodes: float = 4, nu_s: Optional[float] = None) -> RegularizedMass:
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    psi = psi or MollifierProfile(grid.d)
    D = grid.structure

    perturbation = 0.0
    cap = None
    if isinstance(spec, Perturbed):
        base = regularize(spec.base, eps, grid, psi, min_nodes)
        perturbation = spec.amount(eps)
        vals = base.values + perturbation
        cap = base.cap
    elif isinstance(spec, Zero):
        vals = np.zeros(grid.shape)
    else:
        psi_eps = mollifier_scale(psi, eps, D, grid, min_nodes)
        if isinstance(spec, DiracDelta):
            vals = spec.weight * psi_eps.values
        elif isinstance(spec, DeltaSquared):
            vals = psi_eps.values ** 2
        elif isinstance(spec, Bounded):
            vals = convolve(Field(grid, spec.evaluate(grid)), psi_eps).values
        elif isinstance(spec, InversePower):
            vals = convolve(Field(grid, spec.evaluate(grid)), psi_eps).values
            cap = spec.cap
        else:
            raise ConfigurationError(f"unknown mass spec {spec!r}")

    vals = _checked_nonnegative(np.asarray(vals), eps)
    m = RegularizedMass(spec, eps, Field(grid, vals), {}, perturbation, cap)
    for p in norm_exponents(float(D.Q), nu_s):
        m.norm(p)
    return m


def lp_norm(f: Field, p: float) -> float:
    """Quadrature L^p norm (cell_volume * sum |f|^p)^(1/p); sup norm for p = inf."""
    if not p >= 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(f.values)
    top = float(a.max(initial=0.0))
    if math.isinf(p):
        return top
    if top == 0.0:
        return 0.0
    return top * float(f.grid.cell_volume * np.sum((a / top) ** p)) ** (1.0 / p)


# -- moderateness -----------------------------------------------------------

@dataclass
class ModeratenessWitness:
    p: float
    eps: list
    norms: list
    resolved: list
    fit: Optional[PowerFit]
    residual_ceiling: float = 0.1

    @property
    def exponent(self) -> float:
        return self.fit.slope if self.fit else math.nan

    @property
    def verdict(self) -> str:
        if self.fit is None:
            return "undetermined"
        return "moderate" if self.fit.residual <= self.residual_ceiling else "not certified"

    def rows(self) -> list[tuple]:
        return [(e, self.p, n, r) for e, n, r in zip(self.eps, self.norms, self.resolved)]


def moderateness_witness(spec, p: float, net: Union[EpsilonNet, Sequence[float]], grid: BoxGrid,
                         psi: Optional[MollifierProfile] = None, min_nodes: float = 4,
                         refine: bool = True, max_count: int = 4096,
                         allow_unresolved: bool = False,
                         residual_ceiling: float = 0.1) -> ModeratenessWitness:
    """Fit ||m_eps||_{L^p} ~ eps^-N over the net.

    With ``refine`` each eps is evaluated on the coarsest refinement of
    ``grid`` resolving psi_eps; eps needing more than ``max_count`` nodes on
    an axis are unresolved, which raises unless ``allow_unresolved``.
    """
    eps_list = list(net)
    norms, resolved = [], []
    for eps in eps_list:
        try:
            g = resolving_grid(grid, eps, min_nodes, max_count) if refine else grid
            m = regularize(spec, eps, g, psi, min_nodes)
            norms.append(lp_norm(m.field, p))
            resolved.append(True)
        except ResolutionError:
            if not allow_unresolved:
                raise
            norms.append(math.nan)
            resolved.append(False)
    ok = [i for i, r in enumerate(resolved) if r]
    fit = None
    if len(ok) >= 5 and all(norms[i] > 0 for i in ok):
        fit = fit_exponent([eps_list[i] for i in ok], [norms[i] for i in ok])
    return ModeratenessWitness(p, eps_list, norms, resolved, fit, residual_ceiling)


def write_norm_table(rows: Sequence[tuple], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "p", "norm", "resolved_flag"])
        for eps, p, n, r in rows:
            w.writerow([repr(float(eps)), "inf" if math.isinf(p) else repr(float(p)), repr(float(n)), int(bool(r))])
    return path
