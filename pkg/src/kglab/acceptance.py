"""The acceptance battery: nine numbered checks with fixed tolerances.

Each check returns a :class:`CheckResult`; ``run_battery`` runs them in
order.  The sweep-based checks (6-8) share their runs with check 9 through
a small cache, so the whole battery solves each problem once.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .data import Gaussian, PlaneWave
from .dynamics import picard_duhamel_solve, solve
from .experiments import (SolverConfig, consistency_experiment, existence_sweep, fit_exponent,
                          uniqueness_experiment)
from .fitting import EpsilonNet
from .mass import Bounded, DiracDelta, moderateness_witness, regularize
from .spectral import Field, RocklandSymbol, apply_power, forward, inverse, l2_norm
from .structure import DilationStructure, make_grid


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    runtime: float
    limit: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{tag}] criterion {self.number} {self.name} ({self.runtime:.2f}s / {self.limit:g}s) {info}"


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _timed(number: int, name: str, limit: float, body: Callable[[], tuple[bool, dict]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, details = body()
    rt = time.perf_counter() - t0
    return CheckResult(number, name, bool(ok) and rt < limit, rt, limit, details)


def _random_grid(rng: np.random.Generator, max_count: int = 32):
    d = int(rng.integers(1, 3))
    weights = [int(w) for w in rng.integers(1, 3, size=d)]
    D = DilationStructure(weights)
    counts = [int(2 * rng.integers(2, max_count // 2 + 1)) for _ in range(d)]
    extents = [float(rng.uniform(1.0, 10.0)) for _ in range(d)]
    return make_grid(D, extents, counts)


def dense_power_oracle(grid, symbol: RocklandSymbol, sigma: float, values: np.ndarray) -> np.ndarray:
    """a(xi)^sigma applied by explicit double sums over nodes and frequencies."""
    x = grid.points.reshape(-1, grid.d)
    xi = np.stack(np.meshgrid(*[grid.frequency_axis(j) for j in range(grid.d)], indexing="ij"),
                  axis=-1).reshape(-1, grid.d)
    a = symbol(xi)
    mult = np.where(a > 0, np.abs(a) ** sigma, 0.0)
    E = np.exp(1j * x @ xi.T)
    coeff = E.conj().T @ values.reshape(-1)
    return (E @ (mult * coeff) / grid.size).reshape(grid.shape)


# -- 1 ---------------------------------------------------------------------

def check_spectral(seed: int = 20240601) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        worst_rt = worst_parseval = 0.0
        for _ in range(50):
            g = _random_grid(rng)
            f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
            F = forward(f)
            back = inverse(F)
            nf = l2_norm(f)
            worst_rt = max(worst_rt, l2_norm(back - f) / nf)
            worst_parseval = max(worst_parseval, abs(F.l2_norm() ** 2 - nf ** 2) / nf ** 2)
        worst_power = 0.0
        for weights, exps, counts in (([1], [1], [16]), ([1], [2], [12]), ([1, 1], [1, 1], [8, 8]),
                                      ([1, 2], [2, 1], [16, 8]), ([2, 1], [1, 2], [6, 16])):
            D = DilationStructure(weights)
            g = make_grid(D, [float(rng.uniform(1, 8)) for _ in weights], counts)
            a = RocklandSymbol(D, exps)
            for sigma in (0.25, 0.5, 1.0, 1.7):
                v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
                got = apply_power(a, sigma, Field(g, v)).values
                want = dense_power_oracle(g, a, sigma, v)
                worst_power = max(worst_power, np.linalg.norm(got - want) / np.linalg.norm(want))
        ok = worst_rt <= 1e-12 and worst_parseval <= 1e-12 and worst_power <= 1e-10
        return ok, {"roundtrip": worst_rt, "parseval": worst_parseval, "power_vs_dense": worst_power}
    return _timed(1, "spectral correctness", 10.0, body)


# -- 2 ---------------------------------------------------------------------

def check_free_dynamics() -> CheckResult:
    def body():
        worst = 0.0
        cases = (
            (DilationStructure([1]), [1], [2 * math.pi], [32], (3,), 1.0),
            (DilationStructure([1]), [1], [10.0], [64], (-5,), 0.6),
            (DilationStructure([1, 2]), [2, 1], [6.0, 4.0], [16, 16], (2, -3), 1.0),
            (DilationStructure([1, 1]), [1, 1], [2 * math.pi, 2 * math.pi], [16, 16], (1, 2), 1.5),
        )
        for D, exps, L, N, mode, s in cases:
            g = make_grid(D, L, N)
            a = RocklandSymbol(D, exps)
            rec = PlaneWave(mode)
            u0, u1 = rec(g)
            xi = [2 * math.pi * k / Lj for k, Lj in zip(mode, L)]
            omega = float(a(np.array(xi))) ** (s / 2)
            for dt in (0.5, 0.1, 0.01):
                traj = solve(u0, u1, None, a, s, 10.0, dt, snapshot_stride=10 ** 9)
                exact = math.cos(omega * 10.0) * u0.values
                err = np.linalg.norm(traj.final.u.values - exact) / np.linalg.norm(u0.values)
                worst = max(worst, float(err))
        return worst <= 1e-10, {"max_rel_error": worst}
    return _timed(2, "exact free dynamics", 5.0, body)


# -- 3 ---------------------------------------------------------------------

def check_energy_order() -> CheckResult:
    def body():
        D = DilationStructure([1])
        a = RocklandSymbol(D, [1])
        g = make_grid(D, [16.0], [128])
        u0, u1 = Gaussian(1.0, 0.5)(g)
        m = regularize(Bounded("constant", 1.0), 0.5, g)
        drifts = []
        for dt in (0.05, 0.025, 0.0125, 0.00625):
            traj = solve(u0, u1, m, a, 1.0, 5.0, dt, snapshot_stride=10 ** 9)
            drifts.append(traj.final_drift())
        ratios = [drifts[i] / drifts[i + 1] for i in range(3)]
        return all(3.4 <= r <= 4.6 for r in ratios), {"drifts": drifts, "ratios": ratios}
    return _timed(3, "energy conservation order", 60.0, body)


# -- 4 ---------------------------------------------------------------------

def check_oracle() -> CheckResult:
    def body():
        D = DilationStructure([1])
        a = RocklandSymbol(D, [1])
        g = make_grid(D, [8.0], [64])
        u0, u1 = Gaussian(1.0, 0.5)(g)
        m = regularize(DiracDelta(1.0), 0.25, g)
        errs = []
        for dt in (0.01, 0.0025):
            us = solve(u0, u1, m, a, 1.0, 1.0, dt, snapshot_stride=10 ** 9).final.u
            up = picard_duhamel_solve(u0, u1, m, a, 1.0, 1.0, dt)
            errs.append(l2_norm(us - up) / l2_norm(up))
        gain = errs[0] / errs[1]
        return errs[0] <= 1e-4 and errs[1] <= 1e-4 and gain >= 8, {"rel_errors": errs, "gain": gain}
    return _timed(4, "oracle equivalence", 120.0, body)


# -- 5 ---------------------------------------------------------------------

MOLLIFIER_CASES = (
    ("isotropic", [1, 1], [2.0, 2.0], [32, 32]),
    ("anisotropic", [1, 2], [2.0, 2.0], [32, 32]),
)


def check_mollifier_scaling(n: int = 6, min_nodes: float = 16) -> CheckResult:
    def body():
        net = EpsilonNet(0.5, 2 ** -0.5, n)
        out = {}
        ok = True
        for name, weights, L, N in MOLLIFIER_CASES:
            D = DilationStructure(weights)
            g = make_grid(D, L, N)
            Q = float(D.Q)
            for p in (1.0, 2.0, 4.0, math.inf):
                w = moderateness_witness(DiracDelta(1.0), p, net, g, min_nodes=min_nodes, max_count=4096)
                target = Q * (1 - 1 / p)
                tol = 0.02 * target if target > 0 else 0.02
                ok &= abs(w.exponent - target) <= tol
                out[f"{name}_p{'inf' if math.isinf(p) else int(p)}"] = w.exponent
        return ok, out
    return _timed(5, "mollifier scaling law", 60.0, body)


# -- 6-9 -------------------------------------------------------------------

def _line_problem(s: float):
    D = DilationStructure([1])
    a = RocklandSymbol(D, [1])
    base = make_grid(D, [16.0], [128])
    return a, base, Gaussian(1.0, 0.5), SolverConfig(s=s, T=1.0, dt=0.01, snapshot_stride=10)


@lru_cache(maxsize=None)
def _existence(kind: str, s: float):
    a, base, data, cfg = _line_problem(s)
    spec = DiracDelta(1.0) if kind == "delta" else Bounded("gaussian", 1.0, 1.0)
    return existence_sweep(spec, data, EpsilonNet(), a, base, cfg)


@lru_cache(maxsize=None)
def _uniqueness():
    a, base, data, cfg = _line_problem(1.0)
    return uniqueness_experiment(DiracDelta(1.0), data, EpsilonNet(), a, base, cfg)


@lru_cache(maxsize=None)
def _consistency(s: float):
    a, base, data, cfg = _line_problem(s)
    cfg = SolverConfig(s=s, T=2.0, dt=0.02, snapshot_stride=10)
    return consistency_experiment(Bounded("gaussian", 1.0, 1.0), data, EpsilonNet(), a, base, cfg)


def check_existence() -> CheckResult:
    def body():
        d = _existence("delta", 1.0)
        b = _existence("bump", 1.0)
        res = d.fits["S"]["residual"]
        slope = b.fits["S"]["slope"]
        ok = res <= 0.1 and d.verdicts["existence"] == "C1-moderate" and abs(slope) <= 0.05
        return ok, {"delta_slope": d.fits["S"]["slope"], "delta_residual": res, "bump_slope": slope,
                    "unresolved": len(d.unresolved)}
    return _timed(6, "very-weak existence sweep", 600.0, body)


def check_uniqueness() -> CheckResult:
    def body():
        r = _uniqueness()
        cross = [x["cross_rel"] for x in r.records if "cross_rel" in x][0]
        neg = r.criteria["negligibility"]
        ok = r.verdicts["negligibility"] == "negligible" and neg["k_max"] == 10 and cross <= 1e-6
        worst = max(neg["margins"].values())
        return ok, {"verdict": r.verdicts["negligibility"], "worst_margin": worst, "cross_rel": cross}
    return _timed(7, "uniqueness / negligibility", 600.0, body)


def check_consistency() -> CheckResult:
    def body():
        out = {}
        ok = True
        for s in (1.0, 0.4):
            r = _consistency(s)
            ok &= r.verdicts["consistency"] == "consistent"
            out[f"s={s}"] = r.verdicts["consistency"]
            out[f"s={s}_final/floor"] = r.criteria["final"] / r.criteria["floor"]
        ok &= _consistency(0.4).criteria["prop32_path"]
        return ok, out
    return _timed(8, "consistency with classical solution", 900.0, body)


def estimate_battery() -> dict:
    """Max ratio per run and flavor, plus the fitted growth exponent of the ratio along the net."""
    runs = {"existence_delta_s1": _existence("delta", 1.0), "existence_bump_s1": _existence("bump", 1.0),
            "existence_delta_s0.4": _existence("delta", 0.4),
            "consistency_s1": _consistency(1.0), "consistency_s0.4": _consistency(0.4)}
    table = {}
    for name, rep in runs.items():
        for fl in ("prop31", "prop32"):
            eps, r = rep.series(f"ratio_{fl}")
            if len(r) == 0:
                continue
            growth = fit_exponent(eps, r).slope if len(r) >= 5 and np.all(r > 0) else math.nan
            table[(name, fl)] = (float(np.max(r)), growth)
    return table


def check_estimates(growth_tol: float = 0.05) -> CheckResult:
    def body():
        table = estimate_battery()
        constant = max(v[0] for v in table.values())
        worst_growth = max(v[1] for v in table.values())
        has32 = any(fl == "prop32" for _, fl in table)
        finite = all(math.isfinite(v[0]) and math.isfinite(v[1]) for v in table.values())
        ok = finite and has32 and worst_growth <= growth_tol
        return ok, {"constant": constant, "worst_growth": worst_growth, "runs": len(table)}
    return _timed(9, "a-priori estimate meters", 900.0, body)


CHECKS = (check_spectral, check_free_dynamics, check_energy_order, check_oracle, check_mollifier_scaling,
          check_existence, check_uniqueness, check_consistency, check_estimates)


def clear_cache():
    """Forget shared sweep runs so the next battery times them afresh."""
    for f in (_existence, _uniqueness, _consistency):
        f.cache_clear()


def run_battery(report: Callable[[str], None] = print) -> list[CheckResult]:
    clear_cache()
    results = []
    for check in CHECKS:
        r = check()
        report(r.line())
        results.append(r)
    return results
