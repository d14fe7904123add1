import subprocess
import sys

import pytest

from solarprob.cli import main
from solarprob.harness.config import bundled_data_dir

SMALL_FLAGS = ["--horizons", "30", "--repeats", "1", "--sample-size", "200", "--n-estimators", "10", "--models", "ngboost,mcm"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    conf = out / "exp.conf"
    conf.write_text(f"data_dir = {bundled_data_dir()}\nrepeats = 5\n")
    assert main(["run", "--config", str(conf), "--out", str(out / "res"), *SMALL_FLAGS]) == 0
    return out / "res"


def test_run_writes_report_and_flags_override_file(run_dir):
    rows = (run_dir / "rows.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 + 1  # header, ngboost x 4 calibrators, mcm
    assert (run_dir / "fan_chart.svg").exists()


def test_plot_subcommands(run_dir, tmp_path, capsys):
    assert main(["plot", "fan", "--in", str(run_dir / "rows.csv"), "--out", str(tmp_path / "f.svg")]) == 0
    assert main(["plot", "calibration", "--in", str(run_dir / "rows.csv"), "--out", str(tmp_path / "c.svg"), "--model", "mcm"]) == 0
    assert (tmp_path / "f.svg").read_text().startswith("<?xml")
    assert "MCM / None" in (tmp_path / "c.svg").read_text()


def test_invalid_config_exits_with_error(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--test-year", "2016"]) == 2
    assert "ConfigInvalid" in capsys.readouterr().err


def test_missing_rows_file(tmp_path, capsys):
    assert main(["plot", "calibration", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "c.svg")]) == 2


def test_validate_data(tmp_path, capsys):
    assert main(["validate-data", "--data-dir", str(bundled_data_dir())]) == 0
    assert "90 files checked, 0 with problems" in capsys.readouterr().out
    bad = tmp_path / "x" / "2018"
    bad.mkdir(parents=True)
    (bad / "x18152.dat").write_text(" Station\n 40.0 -88.0 200 m\n2018 152 6 1 0 0 0.000 bad\n")
    assert main(["validate-data", "--data-dir", str(tmp_path)]) == 1
    assert "expected 48 fields" in capsys.readouterr().out


def test_synth_then_validate(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--station", "abc", "--years", "2020", "--days", "2"]) == 0
    assert len(list((tmp_path / "abc" / "2020").iterdir())) == 2
    assert main(["validate-data", "--data-dir", str(tmp_path)]) == 0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "solarprob", "--help"], capture_output=True, text=True, check=True)
    assert "validate-data" in out.stdout
