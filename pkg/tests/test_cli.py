import csv
import json

import numpy as np
import pytest

from kglab import cli
from kglab.dynamics import NumericalFailure

FAST = ["--set", "grid.counts=[64]", "--set", "time.T=0.5", "--set", "time.dt=0.05", "--set", "net.n=6"]


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return cli.main([*argv, "--out", str(out), "-q"]), out


def test_solve_plane_wave_conserves_energy(tmp_path):
    code, out = run(tmp_path, "solve", "--set", "mass.variant=zero", "--set", "data.preset=plane_wave",
                    "--set", "data.mode=[3]", "--set", "data.real=true", "--set", "grid.extents=[6.283185307179586]",
                    "--set", "grid.counts=[32]", "--set", "time.T=2.0", "--set", "time.dt=0.1")
    assert code == 0
    with (out / "energy.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    total = np.array([float(r["total"]) for r in rows])
    assert len(total) > 2 and np.max(np.abs(total - total[0])) <= 1e-10 * total[0]
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["config"]["mass"]["variant"] == "zero" and len(echo["config_hash"]) == 64
    assert (out / "ratio_prop31.csv").read_text().startswith("# ")
    assert not (out / "snapshots.csv").exists()


def test_snapshots_on_request(tmp_path):
    code, out = run(tmp_path, "solve", *FAST, "--set", "run.dump_snapshots=true")
    assert code == 0 and (out / "snapshots.csv").exists()


def test_sweep_reports_moderate_verdict(tmp_path):
    code, out = run(tmp_path, "sweep", *FAST)
    assert code == 0
    rep = json.loads((out / "existence.json").read_text())
    assert rep["verdicts"]["existence"] == "C1-moderate"
    assert isinstance(rep["fits"]["S"]["slope"], float)
    head = (out / "existence_S.csv").read_text().splitlines()[0]
    assert head.startswith("# series=S kind=existence config_hash=")


def test_uniqueness_and_consistency_subcommands(tmp_path):
    code, out = run(tmp_path, "uniqueness", *FAST, "--set", "net.n=12")
    assert code == 0
    assert json.loads((out / "uniqueness.json").read_text())["verdicts"]["negligibility"] == "negligible"
    code, out = run(tmp_path, "consistency", *FAST, "--set", "mass.variant=bounded")
    assert code == 0 and (out / "consistency.json").exists()


def test_mollifier_tables(tmp_path):
    code, out = run(tmp_path, "mollifier", "--set", "mass.variant=delta_squared", "--set", "net.n=6")
    assert code == 0
    assert (out / "norm_table_psi.csv").exists() and (out / "norm_table_mass.csv").exists()


def test_configuration_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[operator]\ns = 'one'\n")
    assert cli.main(["solve", str(bad)]) == 2
    assert f"{bad}:2:" in capsys.readouterr().err
    assert cli.main(["sweep", "--set", "run.estimate=prop32", "--out", str(tmp_path / "o")]) == 2
    # singular masses are not allowed in the consistency experiment
    code, _ = run(tmp_path, "consistency", *FAST)
    assert code == 2


def test_numerical_failure_exits_3(tmp_path, monkeypatch):
    def boom(*args, **kw):
        raise NumericalFailure("non-finite state")

    monkeypatch.setattr(cli, "solve", boom)
    code, _ = run(tmp_path, "solve", *FAST)
    assert code == 3


def test_sweep_failure_writes_partial_report(tmp_path, monkeypatch):
    from kglab import experiments

    def boom(*args, **kw):
        raise NumericalFailure("non-finite state")

    monkeypatch.setattr(experiments, "solve", boom)
    code, out = run(tmp_path, "sweep", *FAST)
    assert code == 3
    assert "non-finite" in json.loads((out / "existence.json").read_text())["aborted"]


def test_selftest_passes(tmp_path):
    code, out = run(tmp_path, "selftest")
    assert code == 0
    lines = json.loads((out / "selftest.json").read_text())
    assert [x["criterion"] for x in lines] == list(range(1, 10)) and all(x["passed"] for x in lines)


def test_nothing_written_outside_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["sweep", *FAST, "--out", "results", "-q"]) == 0
    assert [p.name for p in tmp_path.iterdir()] == ["results"]


def test_bad_subcommand():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 2
