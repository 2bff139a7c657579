import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from phbvm.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    render_table,
    run_cli,
    summary_line,
    write_atomic,
)
from phbvm.driver import ExperimentRecord

HEADER = "n,e_y,rate_y,e_H,rate_H,e_C,rate_C,mean_iters,time_sec"


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_table_csv(tmp_path):
    path = tmp_path / "t.csv"
    code, out, _ = _run("table", "--problem", "lv2", "--method", "phbvm", "--k", "6", "--s", "3",
                        "--n", "50,100,200", "--periods", "1", "-o", str(path))
    assert code == EXIT_OK
    assert path.read_text().splitlines()[0] == HEADER
    rows = _read_csv(path)
    assert [r["n"] for r in rows] == ["50", "100", "200"]
    assert rows[0]["rate_y"] == "" and rows[0]["e_C"] == ""
    assert abs(float(rows[1]["rate_y"]) - 6.0) <= 0.2
    assert out.count("n=") == 3


def test_table_json_mirrors_fields(tmp_path):
    path = tmp_path / "t.json"
    code, _, _ = _run("table", "--problem", "lv3", "--method", "ephbvm", "--k", "4", "--s", "2",
                      "--n", "50,100", "--format", "json", "-o", str(path))
    assert code == EXIT_OK
    rows = json.loads(path.read_text())
    assert list(rows[0]) == HEADER.split(",")
    assert rows[0]["rate_y"] is None and rows[1]["rate_C"] is not None


def test_overwrite_is_deterministic(tmp_path):
    path = tmp_path / "t.csv"
    args = ("table", "--problem", "lv2", "--method", "gauss", "--s", "2", "--n", "20,40", "-o", str(path))
    contents = []
    for _ in range(2):
        assert _run(*args)[0] == EXIT_OK
        contents.append([{k: v for k, v in r.items() if k != "time_sec"} for r in _read_csv(path)])
    assert contents[0] == contents[1]
    assert [p.name for p in tmp_path.iterdir()] == ["t.csv"]


def test_growth_csv_shows_energy_drift(tmp_path):
    path = tmp_path / "g.csv"
    code, out, _ = _run("growth", "--problem", "lv2", "--method", "gauss", "--s", "3",
                        "--h-per-period", "100", "--periods", "20", "-o", str(path))
    assert code == EXIT_OK
    rows = _read_csv(path)
    assert list(rows[0]) == ["method", "k", "s", "period", "e_y", "e_H", "e_C"]
    assert len(rows) == 20
    e_H = np.array([float(r["e_H"]) for r in rows])
    periods = np.arange(1, 21)
    assert np.polyfit(periods, e_H, 1)[0] > 0
    assert "slope" in out


def test_growth_json_has_slopes(tmp_path):
    path = tmp_path / "g.json"
    code, _, _ = _run("growth", "--problem", "lv3", "--method", "ephbvm", "--k", "4", "--s", "2",
                      "--h-per-period", "50", "--periods", "5", "--format", "json", "-o", str(path))
    assert code == EXIT_OK
    payload = json.loads(path.read_text())
    assert "ephbvm(4,2)" in payload["slopes"]
    assert payload["series"][0]["e_C"] is not None


def test_step_debug_prints_json():
    code, out, _ = _run("step-debug", "--problem", "lv3", "--method", "ephbvm", "--k", "6", "--s", "3", "--n", "50")
    assert code == EXIT_OK
    info = json.loads(out[out.index("{"):])
    assert len(info["y1"]) == 3 and len(info["alpha"]) == 1
    assert info["rho_skew_defect"] < 1e-13
    assert abs(info["C_defect"][0]) < 1e-12


def test_table_preset_writes_one_file_per_block(tmp_path, monkeypatch):
    import phbvm.cli as cli

    # shrink the published preset to keep the test fast
    monkeypatch.setitem(cli._TABLE_PRESETS, "table3", [("lv3", "ephbvm", 4, 1, (50, 100)),
                                                       ("lv3", "ephbvm", 4, 2, (50, 100))])
    code, _, _ = _run("table", "--preset", "table3", "-o", str(tmp_path / "t3.csv"))
    assert code == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["t3_lv3_ephbvm_k4_s1.csv", "t3_lv3_ephbvm_k4_s2.csv"]


@pytest.mark.parametrize("argv", [
    ["table", "--problem", "lv2", "--method", "ephbvm", "--k", "4", "--s", "2"],
    ["table", "--method", "gauss", "--k", "3", "--s", "2"],
    ["table", "--method", "phbvm", "--s", "2"],
    ["table", "--method", "phbvm", "--k", "1", "--s", "2"],
    ["table", "--problem", "kepler"],
    ["table", "--n", "50,x"],
    ["table", "--k", "2", "--n", "100,50"],
    ["table", "--k", "2", "--tol", "0"],
    ["growth", "--k", "2", "--periods", "3"],
    ["frobnicate"],
    [],
])
def test_configuration_errors(argv):
    code, _, _ = _run(*argv)
    assert code == EXIT_CONFIG


def test_solver_failure_exit_code():
    code, _, err = _run("table", "--method", "phbvm", "--k", "2", "--s", "1", "--n", "1")
    assert code == EXIT_SOLVER
    assert "solver failure" in err


def test_help_exits_cleanly():
    assert _run("--help")[0] == EXIT_OK


def test_summary_formatting():
    rec = ExperimentRecord(100, 1.2345e-3, 2.04, 8.0e-16, None, None, None, 4.33, 0.5)
    line = summary_line(rec)
    assert "e_y=1.23e-03" in line and "rate=2.0" in line and "rate=**" in line
    assert "e_C" not in line and "it=4.3" in line


def test_csv_keeps_full_precision():
    rec = ExperimentRecord(50, 0.1234567890123456, None, 1e-15, None, None, None, 3.0, 0.0)
    row = render_table([rec], "csv").splitlines()[1].split(",")
    assert float(row[1]) == 0.1234567890123456


def test_atomic_write_replaces(tmp_path):
    path = tmp_path / "sub" / "x.txt"
    write_atomic(str(path), "one")
    write_atomic(str(path), "two")
    assert path.read_text() == "two"
    assert [p.name for p in path.parent.iterdir()] == ["x.txt"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "phbvm", "table", "--method", "gauss", "--s", "1", "--n", "50"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "n=" in proc.stdout
