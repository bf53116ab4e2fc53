"""Sectioned TOML experiment configuration.

Parsing and validation errors carry the line of the offending key, so a
bad value in a 40-line file is reported as ``file.toml:17: ...``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import tomli

from .data import DataRecipe, make_data
from .experiments import SolverConfig
from .fitting import EpsilonNet
from .mass import (Bounded, DeltaSquared, DiracDelta, InversePower, MassSpec, Perturbed, Zero)
from .spectral import RocklandSymbol
from .structure import BoxGrid, ConfigurationError, DilationStructure, make_grid

DEFAULTS: dict = {
    "output": "kglab-out",
    "structure": {"weights": [1]},
    "grid": {"extents": [16.0], "counts": [128]},
    "operator": {"exponents": [1], "s": 1.0},
    "mass": {"variant": "dirac", "eps": 0.25},
    "data": {"preset": "gaussian"},
    "time": {"T": 1.0, "dt": 0.01, "snapshot_stride": 10},
    "net": {"eps0": 0.5, "ratio": 2 ** -0.5, "n": 12, "k_max": 10},
    "run": {"min_nodes": 4, "max_count": 4096, "residual_ceiling": 0.1, "estimate": "auto",
            "threads": 1, "dump_snapshots": False},
}

_MASS_KEYS = {
    "zero": set(),
    "bounded": {"shape", "amplitude", "width", "wavenumber", "regularity"},
    "dirac": {"weight"},
    "delta_squared": set(),
    "inverse_power": {"gamma", "cap_radius"},
}


class ConfigError(ConfigurationError):
    """Configuration problem tied to a source location when one is known."""

    def __init__(self, message: str, source: str = "<config>", line: Optional[int] = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def key_lines(text: str) -> dict:
    """Map dotted keys ('section.key') and section names to 1-based line numbers."""
    lines = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[\s*([A-Za-z0-9_.\-]+)\s*\]", line)
        if m:
            section = m.group(1)
            lines.setdefault(section, n)
            continue
        m = re.match(r"([A-Za-z0-9_\-]+)\s*=", line)
        if m:
            lines[f"{section}.{m.group(1)}" if section else m.group(1)] = n
    return lines


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v) if k != "mass" and k != "data" else v
        else:
            out[k] = v
    return out


def parse_override(item: str) -> tuple[str, Any]:
    """'section.key=value' with the value parsed as a TOML value (bare words become strings)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form section.key=value", "--set")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not re.fullmatch(r"[A-Za-z0-9_]+(\.[A-Za-z0-9_]+)?", key):
        raise ConfigError(f"bad override key {key!r}", "--set")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return key, value


@dataclass
class ExperimentConfig:
    raw: dict
    source: str
    lines: dict
    structure: DilationStructure
    grid: BoxGrid
    symbol: RocklandSymbol
    s: float
    mass: MassSpec
    eps: float
    data: DataRecipe
    solver: SolverConfig
    net: EpsilonNet
    k_max: int
    residual_ceiling: float
    estimate: str
    dump_snapshots: bool
    output: Path

    @property
    def nu(self):
        return self.symbol.nu

    @property
    def Q(self):
        return self.structure.Q

    def echo(self) -> str:
        """Canonical JSON echo of the effective configuration (sorted keys, exact floats)."""
        return canonical_json(self.raw)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()

    def flavors(self) -> list[str]:
        if self.estimate == "prop31":
            return ["prop31"]
        if self.estimate == "prop32":
            return ["prop32"]
        return ["prop31", "prop32"] if float(self.Q) > float(self.nu) * self.s else ["prop31"]


def canonical_json(raw: dict) -> str:
    def norm(v):
        if isinstance(v, dict):
            return {k: norm(v[k]) for k in sorted(v)}
        if isinstance(v, list):
            return [norm(x) for x in v]
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        return v
    return json.dumps(norm(raw), sort_keys=True, separators=(",", ":"))


def load_config(path=None, overrides: Sequence[str] = (), text: Optional[str] = None) -> ExperimentConfig:
    """Read a TOML file (or ``text``), apply ``section.key=value`` overrides and validate."""
    source = "<defaults>"
    raw: dict = {}
    lines: dict = {}
    if text is None and path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", source) from None
    if text is not None:
        if path is None:
            source = "<text>"
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"TOML syntax error: {exc}", source, int(m.group(1)) if m else None) from None
        lines = key_lines(text)
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown section or key {k!r}", source, lines.get(k))
    merged = _merge(DEFAULTS, raw)
    for item in overrides:
        key, value = parse_override(item)
        if "." in key:
            sec, k = key.split(".", 1)
            if sec not in DEFAULTS or not isinstance(DEFAULTS[sec], dict):
                raise ConfigError(f"unknown section {sec!r} in override {item!r}", "--set")
            merged.setdefault(sec, {})[k] = value
        else:
            if key not in DEFAULTS or isinstance(DEFAULTS[key], dict):
                raise ConfigError(f"unknown key {key!r} in override {item!r}", "--set")
            merged[key] = value
        lines[key] = None
    return _build(merged, source, lines)


def _build(raw: dict, source: str, lines: dict) -> ExperimentConfig:
    def fail(msg, key):
        line = lines.get(key)
        if line is None and "." in key:
            line = lines.get(key.split(".")[0])
        raise ConfigError(msg, "--set" if key in lines and lines[key] is None else source, line)

    def get(sec, key, kind=None):
        try:
            v = raw[sec][key]
        except KeyError:
            fail(f"missing key {key!r}", f"{sec}.{key}")
        if kind is not None:
            try:
                if kind is float and isinstance(v, bool):
                    raise TypeError
                v = kind(v)
            except (TypeError, ValueError):
                fail(f"{sec}.{key} must be {kind.__name__}, got {v!r}", f"{sec}.{key}")
        return v

    for sec, allowed in (("structure", {"weights"}), ("grid", {"extents", "counts"}),
                         ("operator", {"exponents", "s"}), ("time", {"T", "dt", "snapshot_stride"}),
                         ("net", {"eps0", "ratio", "n", "k_max"}), ("run", set(DEFAULTS["run"]))):
        for k in raw.get(sec, {}):
            if k not in allowed:
                fail(f"unknown key {k!r} in [{sec}]", f"{sec}.{k}")

    try:
        D = DilationStructure(get("structure", "weights", list))
    except (ConfigurationError, ValueError, TypeError, ZeroDivisionError) as exc:
        fail(f"structure.weights: {exc}", "structure.weights")
    try:
        grid = make_grid(D, get("grid", "extents", list), get("grid", "counts", list))
    except (ConfigurationError, ValueError, TypeError) as exc:
        key = "grid.counts" if "count" in str(exc) else "grid.extents"
        fail(str(exc), key)
    s = get("operator", "s", float)
    if not 0 < s:
        fail(f"fractional power s must be positive, got {s}", "operator.s")
    try:
        symbol = RocklandSymbol(D, get("operator", "exponents", list))
    except ConfigurationError as exc:
        fail(str(exc), "operator.exponents")

    mass_raw = dict(raw.get("mass", {}))
    eps = mass_raw.pop("eps", 0.25)
    if not isinstance(eps, (int, float)) or not 0 < eps <= 1:
        fail(f"mass.eps must lie in (0, 1], got {eps!r}", "mass.eps")
    mass = _mass(mass_raw, fail)

    data_raw = dict(raw.get("data", {}))
    preset = data_raw.pop("preset", "gaussian")
    if "mode" in data_raw:
        data_raw["mode"] = tuple(data_raw["mode"])
    try:
        data = make_data(preset, **data_raw)
    except ConfigurationError as exc:
        fail(str(exc), "data.preset")

    T = get("time", "T", float)
    dt = raw["time"].get("dt", "auto")
    if dt != "auto":
        if isinstance(dt, bool) or not isinstance(dt, (int, float)) or not dt > 0:
            fail(f'time.dt must be a positive number or "auto", got {dt!r}', "time.dt")
        dt = float(dt)
        n = round(T / dt)
        if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
            fail(f"time.dt={dt} does not divide T={T}", "time.dt")
    if not T > 0:
        fail(f"time.T must be positive, got {T}", "time.T")
    stride = get("time", "snapshot_stride", int)
    if stride < 1:
        fail("time.snapshot_stride must be at least 1", "time.snapshot_stride")

    try:
        net = EpsilonNet(get("net", "eps0", float), get("net", "ratio", float), get("net", "n", int))
    except ConfigurationError as exc:
        fail(str(exc), "net")
    k_max = get("net", "k_max", int)
    if k_max < 1:
        fail("net.k_max must be at least 1", "net.k_max")

    threads = get("run", "threads", int)
    if threads < 1:
        fail("run.threads must be at least 1", "run.threads")
    estimate = str(get("run", "estimate")).lower()
    if estimate not in ("auto", "prop31", "prop32"):
        fail(f"run.estimate must be auto, prop31 or prop32, got {estimate!r}", "run.estimate")
    Q, nu = float(D.Q), float(symbol.nu)
    if estimate == "prop32" and not Q > nu * s:
        fail(f"prop32 estimates require Q > nu*s, but Q={Q:g} and nu*s={nu * s:g}", "run.estimate")
    min_nodes = get("run", "min_nodes", float)
    max_count = get("run", "max_count", int)
    ceiling = get("run", "residual_ceiling", float)
    solver = SolverConfig(s=s, T=T, dt=dt, snapshot_stride=stride, min_nodes=min_nodes,
                          max_count=max_count, workers=threads)
    return ExperimentConfig(raw=raw, source=source, lines=lines, structure=D, grid=grid, symbol=symbol,
                            s=s, mass=mass, eps=float(eps), data=data, solver=solver, net=net, k_max=k_max,
                            residual_ceiling=ceiling, estimate=estimate,
                            dump_snapshots=bool(get("run", "dump_snapshots")),
                            output=Path(str(raw.get("output", DEFAULTS["output"]))))


def _mass(spec: dict, fail) -> MassSpec:
    spec = dict(spec)
    variant = spec.pop("variant", None)
    if variant == "perturbed":
        kind = spec.pop("kind", "exp")
        base_variant = spec.pop("base", None)
        if base_variant not in _MASS_KEYS:
            fail(f"mass.base must name one of {sorted(_MASS_KEYS)}, got {base_variant!r}", "mass.base")
        try:
            return Perturbed(_mass({"variant": base_variant, **spec}, fail), kind)
        except ConfigurationError as exc:
            fail(str(exc), "mass.kind")
    if variant not in _MASS_KEYS:
        fail(f"mass.variant must be one of {sorted(_MASS_KEYS) + ['perturbed']}, got {variant!r}", "mass.variant")
    extra = set(spec) - _MASS_KEYS[variant]
    if extra:
        k = sorted(extra)[0]
        fail(f"key {k!r} does not apply to mass variant {variant!r}", f"mass.{k}")
    cls = {"zero": Zero, "bounded": Bounded, "dirac": DiracDelta, "delta_squared": DeltaSquared,
           "inverse_power": InversePower}[variant]
    try:
        return cls(**spec)
    except (ConfigurationError, TypeError) as exc:
        fail(f"mass: {exc}", "mass.variant")
