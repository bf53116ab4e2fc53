import textwrap
from pathlib import Path

import pytest

from kglab.config import ConfigError, key_lines, load_config, parse_override
from kglab.mass import DiracDelta, Perturbed, Zero


def test_defaults_load():
    cfg = load_config()
    assert cfg.source == "<defaults>"
    assert isinstance(cfg.mass, DiracDelta) and cfg.eps == 0.25
    assert cfg.grid.counts == (128,) and cfg.solver.dt == 0.01
    assert len(cfg.net) == 12 and cfg.flavors() == ["prop31"]


def test_hash_is_stable_and_sensitive():
    a, b = load_config(), load_config()
    assert a.hash == b.hash and len(a.hash) == 64
    assert load_config(overrides=["operator.s=0.5"]).hash != a.hash
    same = load_config(text="[operator]\ns = 1.0\n")
    assert same.hash == a.hash


def test_file_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(textwrap.dedent("""\
        [grid]
        extents = [16.0]
        counts = [128]

        [operator]
        s = -1.0
        """))
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.line == 6 and str(info.value).startswith(f"{p}:6:")


def test_syntax_error_line(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("[time]\nT = 1.0\ndt = = 2\n")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.line == 3


@pytest.mark.parametrize("text, line", [
    ("colour = 1\n", 1),
    ("[grid]\nwidth = 3\n", 2),
    ("[mass]\nvariant = 'dirac'\ngamma = 0.5\n", 3),
    ("[mass]\nvariant = 'unicorn'\n", 2),
])
def test_unknown_keys_rejected(text, line):
    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    assert info.value.line == line


def test_nu_inconsistency_rejected():
    text = "[structure]\nweights = [1, 1]\n[grid]\nextents = [8.0, 8.0]\ncounts = [32, 32]\n" \
           "[operator]\nexponents = [1, 2]\n"
    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    assert info.value.line == 7


def test_prop32_requires_q_above_nu_s():
    with pytest.raises(ConfigError, match=r"Q > nu\*s"):
        load_config(overrides=["run.estimate=prop32"])
    cfg = load_config(overrides=["run.estimate=prop32", "operator.s=0.4"])
    assert cfg.flavors() == ["prop32"]
    assert set(load_config(overrides=["operator.s=0.4"]).flavors()) == {"prop31", "prop32"}


def test_overrides():
    assert parse_override("time.T=2.5") == ("time.T", 2.5)
    assert parse_override("mass.variant=zero") == ("mass.variant", "zero")
    assert parse_override("grid.counts=[64]") == ("grid.counts", [64])
    cfg = load_config(overrides=["mass.variant=zero", "time.dt=0.05", "run.threads=4"])
    assert isinstance(cfg.mass, Zero) and cfg.solver.dt == 0.05 and cfg.solver.workers == 4
    with pytest.raises(ConfigError, match="--set"):
        load_config(overrides=["nosuch.key=1"])
    with pytest.raises(ConfigError, match="--set"):
        load_config(overrides=["time.T"])
    with pytest.raises(ConfigError, match="divide"):
        load_config(overrides=["time.dt=0.3"])


def test_perturbed_variant():
    cfg = load_config(text="[mass]\nvariant = 'perturbed'\nbase = 'dirac'\nweight = 2.0\nkind = 'none'\n")
    assert isinstance(cfg.mass, Perturbed) and cfg.mass.kind == "none"
    assert cfg.mass.base == DiracDelta(2.0)


def test_key_lines():
    lines = key_lines("a = 1\n[sec]  # note\n\nb = 2\n")
    assert lines == {"a": 1, "sec": 2, "sec.b": 4}


CONFIGS = sorted((Path(__file__).parents[1] / "configs").glob("*.toml"))


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.source == str(path)
