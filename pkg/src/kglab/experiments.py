"""Epsilon-net experiments: existence sweeps, negligibility, uniqueness and
consistency studies.

Every experiment returns a :class:`SweepReport` carrying the raw per-epsilon
series next to the verdicts derived from them.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import estimate_ratio, seminorm
from .dynamics import NumericalFailure, StrangStepper, default_dt, inhomogeneous_solve, solve
from .fitting import EpsilonNet, fit_exponent
from .mass import (Bounded, Perturbed, RegularizedMass, ResolutionError, Zero, mass_tag, regularize,
                   resolving_grid)
from .spectral import Field, RocklandSymbol, l2_norm
from .structure import BoxGrid, ConfigurationError

__all__ = [
    "SolverConfig", "SweepReport", "SweepFailure", "existence_sweep", "negligibility_check",
    "NegligibilityVerdict", "uniqueness_experiment", "consistency_experiment", "monotone_with_plateau",
    "fit_exponent", "EpsilonNet",
]


@dataclass(frozen=True)
class SolverConfig:
    s: float = 1.0
    T: float = 1.0
    dt: object = "auto"
    snapshot_stride: int = 10
    min_nodes: float = 4
    max_count: int = 4096
    workers: int = 1


@dataclass
class SweepReport:
    kind: str
    problem: dict
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)
    unresolved: list = field(default_factory=list)
    aborted: Optional[str] = None
    config_hash: str = ""

    def series(self, key: str) -> tuple[np.ndarray, np.ndarray]:
        """(eps, value) over the resolved records that carry ``key``."""
        rows = [r for r in self.records if r.get("resolved", True) and key in r]
        return np.array([r["eps"] for r in rows]), np.array([r[key] for r in rows])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "problem": self.problem,
            "records": self.records,
            "fits": self.fits,
            "verdicts": self.verdicts,
            "criteria": self.criteria,
            "unresolved": self.unresolved,
            "aborted": self.aborted,
            "config_hash": self.config_hash,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    def write(self, outdir, stem: Optional[str] = None) -> list[Path]:
        """JSON report plus one CSV per numeric series, all under ``outdir``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.kind
        paths = [outdir / f"{stem}.json"]
        paths[0].write_text(self.to_json() + "\n")
        keys = sorted({k for r in self.records for k, v in r.items()
                       if k != "eps" and isinstance(v, (int, float)) and not isinstance(v, bool)})
        for key in keys:
            p = outdir / f"{stem}_{key}.csv"
            with p.open("w", newline="") as fh:
                fh.write(f"# series={key} kind={self.kind} config_hash={self.config_hash}\n")
                w = csv.writer(fh)
                w.writerow(["epsilon", key, "resolved_flag"])
                for r in self.records:
                    if key in r:
                        w.writerow([repr(float(r["eps"])), repr(float(r[key])), int(r.get("resolved", True))])
            paths.append(p)
        return paths

    def summary(self) -> str:
        lines = [f"[{self.kind}] {self.problem.get('mass', '')} hash={self.config_hash[:12]}"]
        for r in self.records:
            vals = " ".join(f"{k}={_fmt(v)}" for k, v in r.items() if k not in ("eps", "resolved", "counts"))
            flag = "" if r.get("resolved", True) else " (unresolved)"
            lines.append(f"  eps={r['eps']:.6g}{flag} {vals}")
        for name, fit in self.fits.items():
            lines.append(f"  fit {name}: slope={fit['slope']:.6g} residual={fit['residual']:.3g}")
        for name, verdict in self.verdicts.items():
            lines.append(f"  verdict {name}: {verdict}")
        if self.aborted:
            lines.append(f"  ABORTED: {self.aborted}")
        return "\n".join(lines)


class SweepFailure(NumericalFailure):
    """A solver failure inside a sweep; ``report`` holds the completed part."""

    def __init__(self, message: str, report: SweepReport):
        super().__init__(message)
        self.report = report


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _describe(spec) -> dict:
    d = {"variant": mass_tag(spec)}
    if hasattr(spec, "__dataclass_fields__"):
        for k, v in asdict(spec).items():
            d[k] = v
    return d


def _net_values(net) -> list[float]:
    return list(net) if not isinstance(net, EpsilonNet) else net.values.tolist()


def _grid_for(spec, eps: float, base: BoxGrid, cfg: SolverConfig) -> BoxGrid:
    if isinstance(spec, Zero):
        return base
    return resolving_grid(base, eps, cfg.min_nodes, cfg.max_count)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map; results are collected before any is inspected."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, x) for x in items]
        return [f.result() if f.exception() is None else f.exception() for f in futures]


def _nu_s(symbol: RocklandSymbol, s: float) -> float:
    return float(symbol.nu) * s


def _flavors(symbol: RocklandSymbol, s: float) -> list[str]:
    out = ["prop31"]
    if float(symbol.structure.Q) > _nu_s(symbol, s):
        out.append("prop32")
    return out


def _collect(report: SweepReport, eps_list, results):
    """Attach per-eps results in order; stop at the first solver failure."""
    for eps, res in zip(eps_list, results):
        if isinstance(res, ResolutionError):
            report.unresolved.append(eps)
            report.records.append({"eps": eps, "resolved": False, "reason": str(res)})
            continue
        if isinstance(res, NumericalFailure):
            report.aborted = f"eps={eps:g}: {res}"
            raise SweepFailure(report.aborted, report)
        if isinstance(res, Exception):
            raise res
        report.records.append(res)


def _guard(fn):
    def run(eps):
        try:
            return fn(eps)
        except (ResolutionError, NumericalFailure) as exc:
            return exc
    return run


# -- existence ---------------------------------------------------------------

def existence_sweep(spec, data, net, symbol: RocklandSymbol, base: BoxGrid,
                    solver: SolverConfig = SolverConfig(), residual_ceiling: float = 0.1) -> SweepReport:
    """Solve the regularised problem for every eps and fit S(eps) ~ eps^-N.

    S(eps) is the sup over snapshots of ||u||_{H^{s nu/2}} + ||u_t||_{L^2}.
    The verdict is ``C1-moderate`` when the log-log fit residual stays at or
    below ``residual_ceiling``.
    """
    s = solver.s
    nu_s = _nu_s(symbol, s)
    flavors = _flavors(symbol, s)
    eps_list = _net_values(net)

    def one(eps):
        t0 = time.perf_counter()
        g = _grid_for(spec, eps, base, solver)
        m = regularize(spec, eps, g, min_nodes=solver.min_nodes, nu_s=nu_s)
        u0, u1 = data(g)
        traj = solve(u0, u1, m, symbol, s, solver.T, solver.dt, solver.snapshot_stride)
        S = max(seminorm(st.u, st.p, symbol, s) for st in traj.states)
        rec = {"eps": eps, "resolved": True, "counts": list(g.counts), "S": S,
               "mass_sup": m.norm(math.inf), "mass_L1": m.norm(1.0),
               "energy_drift": traj.energy_drift()}
        if len(flavors) > 1:
            rec["mass_L_Q_nus"] = m.norm(float(symbol.structure.Q) / nu_s)
            rec["mass_L_2Q_nus"] = m.norm(2 * float(symbol.structure.Q) / nu_s)
        for fl in flavors:
            rec[f"ratio_{fl}"] = float(np.max(estimate_ratio(traj, u0, u1, m, symbol, s, fl)))
        rec["runtime"] = time.perf_counter() - t0
        return rec

    report = SweepReport("existence", {"mass": _describe(spec), "s": s, "nu": str(symbol.nu),
                                       "Q": str(symbol.structure.Q), "T": solver.T, "dt": solver.dt,
                                       "net": eps_list, "base_grid": base.describe()})
    _collect(report, eps_list, _map(_guard(one), eps_list, solver.workers))

    eps, S = report.series("S")
    report.criteria["residual_ceiling"] = residual_ceiling
    if len(eps) >= 5:
        fit = fit_exponent(eps, S)
        report.fits["S"] = fit.as_dict()
        ok = fit.residual <= residual_ceiling
        report.verdicts["existence"] = "C1-moderate" if ok else "not certified"
        for fl in flavors:
            e, r = report.series(f"ratio_{fl}")
            if np.all(r > 0):
                report.fits[f"ratio_{fl}"] = fit_exponent(e, r).as_dict()
            report.criteria[f"ratio_{fl}_max"] = float(np.max(r))
    else:
        report.verdicts["existence"] = "undetermined"
    return report


# -- negligibility -------------------------------------------------------------

@dataclass
class NegligibilityVerdict:
    negligible: bool
    k_max: int
    margins: dict
    failed_k: Optional[int]
    tail_start: float

    @property
    def verdict(self) -> str:
        return "negligible" if self.negligible else "not negligible"

    def as_dict(self) -> dict:
        return {"verdict": self.verdict, "k_max": self.k_max, "failed_k": self.failed_k,
                "tail_start_eps": self.tail_start,
                "margins": {str(k): v for k, v in self.margins.items()}}


def negligibility_check(eps: Sequence[float], values: Sequence[float], k_max: int = 10) -> NegligibilityVerdict:
    """Finite-k negligibility certificate on a decreasing eps-net.

    For each k = 1..k_max the ratios value/eps^k must be nonincreasing over
    the small-eps half of the net (the tail, including its smallest eps).
    The per-k margin is the largest log-increase of consecutive ratios on
    the tail; a margin at or below zero passes.  A whole-net test is not
    used because e^{-1/eps}/eps^k peaks at eps = 1/k, inside any net
    reaching eps ~ 0.01, so only the asymptotic trend is meaningful.
    """
    eps = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    if eps.shape != v.shape or eps.size < 5:
        raise ValueError("negligibility_check needs at least 5 matched points")
    order = np.argsort(-eps)
    eps, v = eps[order], v[order]
    if np.any(~np.isfinite(v)) or np.any(v < 0):
        return NegligibilityVerdict(False, k_max, {}, 1, float(eps[0]))
    start = eps.size // 2
    tail_e, tail_v = eps[start:], v[start:]
    margins = {}
    failed = None
    with np.errstate(divide="ignore", invalid="ignore"):
        log_v = np.log(tail_v)
        for k in range(1, k_max + 1):
            steps = np.diff(log_v - k * np.log(tail_e))
            # zero followed by zero is flat; zero followed by a positive value is an increase
            steps = np.where(np.isnan(steps), -math.inf, steps)
            margins[k] = float(np.max(steps))
            if margins[k] > 1e-12 and failed is None:
                failed = k
    return NegligibilityVerdict(failed is None, k_max, margins, failed, float(tail_e[0]))


# -- uniqueness ----------------------------------------------------------------

def _sup_l2(states) -> float:
    return max(l2_norm(st.u) for st in states)


def uniqueness_experiment(spec, data, net, symbol: RocklandSymbol, base: BoxGrid,
                          solver: SolverConfig = SolverConfig(), perturbation: str = "exp",
                          k_max: int = 10, cross_index: Optional[int] = None,
                          cross_tol: float = 1e-6) -> SweepReport:
    """Stability of the solution net under m~_eps = m_eps + e^{-1/eps}.

    D(eps) = sup_t ||u_eps - u~_eps|| is computed from the difference
    equation U'' + R^s U + m_eps U = (m~_eps - m_eps) u~_eps with zero data,
    driven in lockstep by the perturbed solver; this avoids the cancellation
    of subtracting two nearly equal solutions.  At ``cross_index`` (default:
    mid-net) D is also computed by direct subtraction.
    """
    s = solver.s
    eps_list = _net_values(net)
    if cross_index is None:
        cross_index = (len(eps_list) - 1) // 2
    pert_spec = spec if isinstance(spec, Perturbed) else Perturbed(spec, perturbation)
    base_spec = pert_spec.base

    def one(eps):
        t0 = time.perf_counter()
        g = _grid_for(base_spec, eps, base, solver)
        m = regularize(base_spec, eps, g, min_nodes=solver.min_nodes)
        mt = regularize(pert_spec, eps, g, min_nodes=solver.min_nodes)
        u0, u1 = data(g)
        dt = solver.dt
        if dt == "auto":
            dt = default_dt(mt.sup, symbol, g, s, solver.T)
        delta = mt.perturbation
        stepper = StrangStepper(u0, u1, mt, symbol, s, dt)

        def source(t_mid):
            return delta * stepper.step()

        U = inhomogeneous_solve(source, m, symbol, s, solver.T, dt, grid=g,
                                snapshot_stride=solver.snapshot_stride)
        rec = {"eps": eps, "resolved": True, "counts": list(g.counts), "D": _sup_l2(U.states),
               "perturbation_sup": delta, "dt": dt}
        if eps == eps_list[cross_index]:
            a = solve(u0, u1, m, symbol, s, solver.T, dt, solver.snapshot_stride)
            b = solve(u0, u1, mt, symbol, s, solver.T, dt, solver.snapshot_stride)
            direct = max(l2_norm(x.u - y.u) for x, y in zip(a.states, b.states))
            rec["D_direct"] = direct
            rec["cross_rel"] = abs(direct - rec["D"]) / rec["D"] if rec["D"] else abs(direct)
        rec["runtime"] = time.perf_counter() - t0
        return rec

    report = SweepReport("uniqueness", {"mass": _describe(base_spec), "perturbation": perturbation,
                                        "s": s, "T": solver.T, "dt": solver.dt, "net": eps_list,
                                        "base_grid": base.describe()})
    _collect(report, eps_list, _map(_guard(one), eps_list, solver.workers))

    eps, D = report.series("D")
    report.criteria.update({"k_max": k_max, "cross_tol": cross_tol, "cross_eps": eps_list[cross_index]})
    if len(eps) >= 5:
        neg = negligibility_check(eps, D, k_max)
        report.verdicts["negligibility"] = neg.verdict
        report.criteria["negligibility"] = neg.as_dict()
    else:
        report.verdicts["negligibility"] = "undetermined"
    cross = [r for r in report.records if "cross_rel" in r]
    if cross:
        ok = cross[0]["cross_rel"] <= cross_tol
        report.verdicts["cross_validation"] = "agree" if ok else "disagree"
    return report


# -- consistency ---------------------------------------------------------------

def monotone_with_plateau(values: Sequence[float], floor: float, band: float = 3.0) -> tuple[bool, Optional[int]]:
    """Strictly decreasing until the series first enters [0, band * floor];
    from there on it may wander but must stay inside that band.

    Returns (ok, index at which the plateau starts or None).
    """
    v = np.asarray(values, dtype=float)
    level = band * floor
    inside = np.flatnonzero(v <= level)
    start = int(inside[0]) if inside.size else None
    head = v if start is None else v[: start + 1]
    if np.any(np.diff(head) >= 0):
        return False, start
    if start is not None and np.any(v[start:] > level):
        return False, start
    return True, start


def _restricted_u(traj, grid: BoxGrid) -> list[np.ndarray]:
    return [grid.restrict_from(st.grid, st.u.values) for st in traj.states]


def consistency_experiment(spec, data, net, symbol: RocklandSymbol, base: BoxGrid,
                           solver: SolverConfig = SolverConfig(), spatial_factor: int = 2,
                           temporal_factor: int = 4, floor_factor: float = 10.0,
                           plateau_band: float = 3.0) -> SweepReport:
    """Convergence of u_eps to the classical solution of the bounded-mass problem.

    The reference u uses the unregularised mass on a grid ``spatial_factor``
    times finer with a step ``temporal_factor`` times smaller.  Comparisons
    use the base-grid nodes, which every refinement contains.  The floor is
    the same distance for the unregularised mass solved at base resolution.
    """
    if not isinstance(spec, (Bounded, Zero)):
        raise ConfigurationError(f"consistency needs a bounded mass, got {mass_tag(spec)}")
    s = solver.s
    nu_s = _nu_s(symbol, s)
    flavors = _flavors(symbol, s)
    eps_list = _net_values(net)
    dt = solver.dt
    if dt == "auto":
        raise ConfigurationError("consistency runs need an explicit time step")
    stride = solver.snapshot_stride
    cv = base.cell_volume

    def exact(g):
        if isinstance(spec, Zero):
            return RegularizedMass(spec, 0.0, Field.zeros(g))
        return RegularizedMass.exact(spec, g)

    ref_grid = base.refined(spatial_factor)
    u0, u1 = data(ref_grid)
    ref = solve(u0, u1, exact(ref_grid), symbol, s, solver.T, dt / temporal_factor, stride * temporal_factor)
    ref_u = _restricted_u(ref, base)

    def dist(traj) -> float:
        us = _restricted_u(traj, base)
        if len(us) != len(ref_u):
            raise NumericalFailure("snapshot times of run and reference differ")
        return max(math.sqrt(cv * float(np.sum(np.abs(a - b) ** 2))) for a, b in zip(us, ref_u))

    u0, u1 = data(base)
    floor = dist(solve(u0, u1, exact(base), symbol, s, solver.T, dt, stride))

    def one(eps):
        t0 = time.perf_counter()
        g = _grid_for(spec, eps, base, solver)
        m = regularize(spec, eps, g, min_nodes=solver.min_nodes, nu_s=nu_s)
        v0, v1 = data(g)
        traj = solve(v0, v1, m, symbol, s, solver.T, dt, stride)
        m_exact = exact(g)
        rec = {"eps": eps, "resolved": True, "counts": list(g.counts), "C": dist(traj),
               "mass_error_sup": float(np.max(np.abs(m.values - m_exact.values)))}
        for fl in flavors:
            rec[f"ratio_{fl}"] = float(np.max(estimate_ratio(traj, v0, v1, m, symbol, s, fl)))
        rec["runtime"] = time.perf_counter() - t0
        return rec

    report = SweepReport("consistency", {"mass": _describe(spec), "s": s, "T": solver.T, "dt": dt,
                                         "net": eps_list, "base_grid": base.describe(),
                                         "reference": {"spatial_factor": spatial_factor,
                                                       "temporal_factor": temporal_factor}})
    report.criteria.update({"floor": floor, "floor_factor": floor_factor, "plateau_band": plateau_band,
                            "prop32_path": "prop32" in flavors})
    _collect(report, eps_list, _map(_guard(one), eps_list, solver.workers))

    eps, C = report.series("C")
    if len(C) == 0:
        report.verdicts["consistency"] = "undetermined"
        return report
    scale = max(l2_norm(u0), 1e-300)
    if np.max(C) <= 1e-12 * scale:
        ok, start = True, 0
    else:
        ok, start = monotone_with_plateau(C, floor, plateau_band)
    final_ok = C[-1] <= floor_factor * floor or np.max(C) <= 1e-12 * scale
    report.criteria.update({"monotone": bool(ok), "plateau_start": start, "final": float(C[-1]),
                            "final_below_floor_factor": bool(final_ok)})
    report.verdicts["consistency"] = "consistent" if ok and final_ok else "not consistent"
    for fl in flavors:
        e, r = report.series(f"ratio_{fl}")
        report.criteria[f"ratio_{fl}_max"] = float(np.max(r))
    return report
