"""Command-line entry point: ``kglab <subcommand> [config.toml] [--set section.key=value ...]``.

Exit status is 0 on success, 2 for configuration errors and 3 for
numerical failures.  Every artifact goes under the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .acceptance import run_battery
from .config import ExperimentConfig, canonical_json, load_config
from .diagnostics import estimate_ratio, seminorm, write_energy_csv, write_series_csv
from .dynamics import NumericalFailure, solve
from .experiments import (SweepFailure, SweepReport, consistency_experiment, existence_sweep,
                          uniqueness_experiment)
from .mass import (DiracDelta, NegativeMassError, ResolutionError, Zero, moderateness_witness, norm_exponents, regularize,
                   resolving_grid, write_norm_table)
from .structure import ConfigurationError

log = logging.getLogger("kglab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SUBCOMMANDS = ("solve", "sweep", "uniqueness", "consistency", "mollifier", "selftest")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kglab", description="Spectral laboratory for regularised "
                                "fractional Klein-Gordon problems with singular masses.")
    p.add_argument("--version", action="version", version=f"kglab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?", help="TOML configuration file (defaults apply when omitted)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a configuration value; repeatable")
        sp.add_argument("--out", help="output directory (overrides the configured one)")
        sp.add_argument("--threads", type=int, help="cap on parallel per-eps workers")
        sp.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging; -vv also dumps trajectory snapshots from solve")
        sp.add_argument("-q", "--quiet", action="store_true", help="suppress the stdout summary")
    return p


def _setup_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _write_echo(cfg: ExperimentConfig, outdir: Path) -> Path:
    path = outdir / "config_echo.json"
    doc = {"source": cfg.source, "config_hash": cfg.hash, "config": json.loads(canonical_json(cfg.raw))}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _grid_for_eps(cfg: ExperimentConfig, eps: float):
    if isinstance(cfg.mass, Zero):
        return cfg.grid
    return resolving_grid(cfg.grid, eps, cfg.solver.min_nodes, cfg.solver.max_count)


def _write_snapshots(path: Path, traj) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "re_u", "im_u", "re_p", "im_p"])
        for st in traj.states:
            u = st.u.values.ravel()
            p = st.p.values.ravel()
            for n in range(u.size):
                w.writerow([repr(st.t), n] + [repr(float(v)) for v in (u[n].real, u[n].imag, p[n].real, p[n].imag)])
    return path


def cmd_solve(cfg: ExperimentConfig, outdir: Path, verbosity: int) -> SweepReport:
    eps = cfg.eps
    g = _grid_for_eps(cfg, eps)
    nu_s = float(cfg.nu) * cfg.s
    m = regularize(cfg.mass, eps, g, min_nodes=cfg.solver.min_nodes, nu_s=nu_s)
    u0, u1 = cfg.data(g)
    t0 = time.perf_counter()
    traj = solve(u0, u1, m, cfg.symbol, cfg.s, cfg.solver.T, cfg.solver.dt, cfg.solver.snapshot_stride)
    runtime = time.perf_counter() - t0
    write_energy_csv(outdir / "energy.csv", traj.energies)
    rec = {"eps": eps, "counts": list(g.counts), "dt": traj.dt, "steps": traj.steps,
           "S": max(seminorm(st.u, st.p, cfg.symbol, cfg.s) for st in traj.states),
           "energy_drift": traj.energy_drift(), "runtime": runtime}
    for p in norm_exponents(float(cfg.Q), nu_s if float(cfg.Q) > nu_s else None):
        rec[f"mass_L{'inf' if math.isinf(p) else format(p, 'g')}"] = m.norm(p)
    for fl in cfg.flavors():
        r = estimate_ratio(traj, u0, u1, m, cfg.symbol, cfg.s, fl)
        write_series_csv(outdir / f"ratio_{fl}.csv", traj.times, r, fl, cfg.hash, column="ratio")
        rec[f"ratio_{fl}"] = float(np.max(r))
    if verbosity >= 2 or cfg.dump_snapshots:
        _write_snapshots(outdir / "snapshots.csv", traj)
    report = SweepReport("solve", {"mass": {"variant": type(cfg.mass).__name__}, "s": cfg.s, "T": cfg.solver.T})
    report.records.append(rec)
    return report


def cmd_mollifier(cfg: ExperimentConfig, outdir: Path) -> SweepReport:
    """Norm tables of psi_eps, and of the configured mass when it is something else."""
    Q = float(cfg.Q)
    nu_s = float(cfg.nu) * cfg.s
    ps = sorted(set([1.0, 2.0, 4.0, math.inf] + norm_exponents(Q, nu_s if Q > nu_s else None)))
    report = SweepReport("mollifier", {"mass": {"variant": type(cfg.mass).__name__}, "Q": str(cfg.Q),
                                       "net": cfg.net.values.tolist()})
    specs = {"psi": DiracDelta(1.0)}
    if not isinstance(cfg.mass, (Zero, DiracDelta)):
        specs["mass"] = cfg.mass
    unresolved = set()
    for label, spec in specs.items():
        rows = []
        for p in ps:
            w = moderateness_witness(spec, p, cfg.net, cfg.grid, min_nodes=cfg.solver.min_nodes,
                                     max_count=cfg.solver.max_count, allow_unresolved=True,
                                     residual_ceiling=cfg.residual_ceiling)
            rows.extend(w.rows())
            key = f"{label}_L{'inf' if math.isinf(p) else format(p, 'g')}"
            if w.fit is not None:
                report.fits[key] = w.fit.as_dict()
            report.verdicts[key] = w.verdict
            if label == "psi":
                report.criteria[f"{key}_target"] = Q * (1 - 1 / p)
            unresolved.update(e for e, r in zip(w.eps, w.resolved) if not r)
        write_norm_table(rows, outdir / f"norm_table_{label}.csv")
    report.unresolved = sorted(unresolved, reverse=True)
    for e in cfg.net:
        report.records.append({"eps": e, "resolved": e not in unresolved})
    return report


def _run(args, cfg: ExperimentConfig, outdir: Path) -> int:
    name = args.command
    if name == "selftest":
        lines = []
        results = run_battery(report=(lambda s: None) if args.quiet else print)
        for r in results:
            lines.append({"criterion": r.number, "name": r.name, "passed": r.passed, "runtime": r.runtime,
                          "limit": r.limit, "details": {k: _plain(v) for k, v in r.details.items()}})
        (outdir / "selftest.json").write_text(json.dumps(lines, indent=2) + "\n")
        return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC

    report: Optional[SweepReport] = None
    try:
        if name == "solve":
            report = cmd_solve(cfg, outdir, args.verbose)
        elif name == "sweep":
            report = existence_sweep(cfg.mass, cfg.data, cfg.net, cfg.symbol, cfg.grid, cfg.solver,
                                     cfg.residual_ceiling)
        elif name == "uniqueness":
            report = uniqueness_experiment(cfg.mass, cfg.data, cfg.net, cfg.symbol, cfg.grid, cfg.solver,
                                           k_max=cfg.k_max)
        elif name == "consistency":
            report = consistency_experiment(cfg.mass, cfg.data, cfg.net, cfg.symbol, cfg.grid, cfg.solver)
        elif name == "mollifier":
            report = cmd_mollifier(cfg, outdir)
    except SweepFailure as exc:
        exc.report.config_hash = cfg.hash
        exc.report.write(outdir)
        raise
    report.config_hash = cfg.hash
    report.write(outdir)
    if not args.quiet:
        print(report.summary())
    return EXIT_OK


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        overrides = list(args.overrides)
        if args.threads is not None:
            overrides.append(f"run.threads={args.threads}")
        cfg = load_config(args.config, overrides)
    except ConfigurationError as exc:
        print(f"kglab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(args.out) if args.out else cfg.output
    outdir.mkdir(parents=True, exist_ok=True)
    _write_echo(cfg, outdir)
    log.info("running %s with config hash %s into %s", args.command, cfg.hash[:12], outdir)
    try:
        return _run(args, cfg, outdir)
    except (ConfigurationError, ResolutionError) as exc:
        print(f"kglab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, NegativeMassError, FloatingPointError) as exc:
        print(f"kglab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
