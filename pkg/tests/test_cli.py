import json
import subprocess
import sys

import pytest

from cvxreg.cli import main


def test_fit_artifacts(tmp_path):
    out = tmp_path / "run1"
    code = main(["fit", "--gen", "sd1", "--n", "120", "--d", "3", "--rho", "1e-3",
                 "--variant", "two-stage", "--rule", "rtg", "--seed", "7", "--certify",
                 "--lstar", "-1", "--out", str(out)])
    assert code == 0
    assert {f.name for f in out.iterdir()} >= {"model.json", "trace.csv", "summary.json", "config.json"}
    summary = json.loads((out / "summary.json").read_text())
    assert {"maxViolation", "relativeGap", "gap", "finalL", "relObj"} <= summary.keys()
    assert set(summary["trainRmse"]) == {"normalized", "original"}
    header = (out / "trace.csv").read_text().splitlines()[0].split(",")
    assert {"iter", "L", "relObj", "sizeW", "sizeDelta", "stage", "seconds"} <= set(header)
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["driver"]["rule"]["K"] is None and cfg["args"]["rho"] == 1e-3


def test_missing_rho_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["fit", "--gen", "sd1", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_rho_zero_surrogate(tmp_path, caplog):
    out = tmp_path / "r0"
    assert main(["fit", "--gen", "sd1", "--n", "40", "--d", "2", "--rho", "0", "--max-iters", "5",
                 "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["rho"] == 1e-12
    assert any("rho=0" in r.message for r in caplog.records)


def test_gen_then_fit_csv_then_eval(tmp_path, capsys):
    data = tmp_path / "d.csv"
    assert main(["gen", "--gen", "sd2", "--n", "80", "--d", "2", "--seed", "3", "--out", str(data)]) == 0
    assert (tmp_path / "d.json").exists()
    out = tmp_path / "fit"
    assert main(["fit", "--csv", str(data), "--rho", "1e-2", "--max-iters", "30", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(out / "model.json"), "--csv", str(data)]) == 0
    report = json.loads(capsys.readouterr().out)
    summary = json.loads((out / "summary.json").read_text())
    assert report["rmse"] == pytest.approx(summary["trainRmse"]["original"], rel=1e-9)


def test_bench_table(tmp_path, capsys):
    out = tmp_path / "b"
    args = ["bench", "--gen", "sd1", "--n", "100", "--d", "2", "--rho", "1e-3",
            "--configs", "two-stage:rtg", "asgd:block-rtg", "--reps", "2", "--max-iters", "40",
            "--out", str(out)]
    assert main(args) == 0
    first = (out / "table.csv").read_text()
    lines = first.strip().splitlines()
    assert lines[0] == "config,median_s,mad_s" and len(lines) == 3
    assert len(list(out.glob("trace_*.csv"))) == 4
    main(args)
    again = (out / "table.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in again] == [r.split(",")[0] for r in lines]


def test_bench_unmet_target_dash(tmp_path):
    out = tmp_path / "b"
    main(["bench", "--gen", "sd1", "--n", "100", "--d", "2", "--rho", "1e-3", "--configs",
          "asgd:random", "eas:greedy", "--reps", "1", "--max-iters", "2", "--target", "1e-9",
          "--out", str(out)])
    rows = (out / "table.csv").read_text().strip().splitlines()[1:]
    assert any(r.endswith(",-,-") for r in rows)


def test_diag_rules(tmp_path, capsys):
    assert main(["diag-rules", "--n", "12", "--mc", "2000", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "diag_rules.json").read_text())
    assert all(r["pass"] for r in rep["rules"])
    assert main(["diag-rules", "--n", "12", "--rules", "random", "--k", "132", "--mc", "10",
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "diag_rules.json").read_text())
    assert rep["rules"][0]["ratio"] == pytest.approx(1.0, rel=1e-12)
    main(["diag-rules", "--n", "11", "--rules", "greedy", "--p", "1", "--out", str(tmp_path)])
    ratio = json.loads((tmp_path / "diag_rules.json").read_text())["rules"][0]["ratio"]
    assert 1.0 <= ratio <= 10.0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "cvxreg", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "cvxreg" in r.stdout


def test_module_error_exit(tmp_path, capsys):
    assert main(["fit", "--csv", str(tmp_path / "missing.csv"), "--rho", "1", "--out",
                 str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
