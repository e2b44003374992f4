import csv
import json
import subprocess
import sys

import pytest

from fopc.cli import main, parse_config, ConfigError
from fopc.harness import RUN_HEADER, allocate_budget


def write_config(tmp_path, **data):
    data.setdefault("scenario", "scalar")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_scalar_default(tmp_path, capsys):
    cfg = write_config(tmp_path, horizon=20.0)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "run.csv")
    assert tuple(rows[0]) == RUN_HEADER
    assert len(rows) == 201 + 1
    assert all(float(r[2]) >= 0 for r in rows[1:])
    stdout = capsys.readouterr().out
    assert "asymptotic_error" in stdout and "GlobalOh" in stdout


def test_run_large_stepsize_diverges_or_has_empty_envelope(tmp_path):
    cfg = write_config(tmp_path, horizon=20.0, solver={"alpha": 10, "beta": 10})
    out = tmp_path / "o"
    code = main(["run", "--config", cfg, "--out", str(out)])
    assert code in (0, 2)
    if code == 0:
        assert all(r[4] == "" for r in read_csv(out / "run.csv")[1:])


def test_missing_scenario(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text("{}")
    assert main(["run", "--config", str(path)]) == 1
    assert "scenario" in capsys.readouterr().err


@pytest.mark.parametrize(
    "data, key",
    [
        ({"scenario": "scalar", "horizn": 3}, "horizn"),
        ({"scenario": "scalar", "solver": {"alhpa": 0.1}}, "solver.alhpa"),
        ({"scenario": "vector", "scenario_params": {"kappa": 1}}, "scenario_params.kappa"),
        ({"scenario": "nope"}, "scenario"),
        ({"scenario": "scalar", "h": -1}, "h"),
    ],
)
def test_config_errors_name_key(data, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(data)


def test_overrides_and_seed(tmp_path, capsys):
    cfg = write_config(tmp_path, horizon=10.0)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out), "--set", "solver.P=0", "--set", "h=0.2"]) == 0
    rows = read_csv(out / "run.csv")
    assert len(rows) == 51 + 1
    assert main(["run", "--config", cfg, "--set", "bogus"]) == 1


def test_sweep_two_variants(tmp_path, capsys):
    cfg = write_config(
        tmp_path, horizon=40.0, h_list=[0.05, 0.1, 0.2, 0.4],
        variants={"baseline": {"P": 0}, "exact": {"P": "inf", "gamma": 0.0}},
    )
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert rows[0] == ["variant", "h", "asymptotic_error", "slope_contrib", "P", "C", "certified"]
    assert len(rows) == 9
    assert [r[0] for r in rows[1:]] == ["baseline"] * 4 + ["exact"] * 4
    assert [float(r[1]) for r in rows[1:5]] == [0.05, 0.1, 0.2, 0.4]
    assert rows[5][4] == "inf"
    stdout = capsys.readouterr().out
    assert "slope baseline" in stdout and "slope exact" in stdout


def test_sweep_empty_h_list(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--h"]) == 1


def test_budget_sweep_follows_allocation(tmp_path):
    cfg = write_config(
        tmp_path, scenario="vector", scenario_params={"n": 5}, horizon=1.0,
        solver={"alpha": 0.15, "beta": 0.15},
    )
    out = tmp_path / "b"
    args = ["sweep", "--config", cfg, "--out", str(out), "--h", "0.006", "0.022", "0.04",
            "--budget", "0.5,0.5,0.00076,0.00062,0.01"]
    assert main(args) == 0
    rows = {(r[0], float(r[1])): r for r in read_csv(out / "sweep.csv")[1:]}
    for h in (0.006, 0.022, 0.04):
        plan = allocate_budget(h)
        pc = rows[("prediction-correction", h)]
        assert int(pc[5]) == plan.C
        assert int(pc[4]) == plan.P
        assert (pc[2] == "") == (not plan.prediction_affordable)
        assert int(rows[("total-correction", h)][5]) == plan.C_total
    assert main(args[:-1] + ["1,2"]) == 1


def test_bounds_examples(capsys):
    base = ["bounds", "--m", "1", "--L", "2.53", "--alpha", "0.56", "--beta", "0.56"]
    assert main(base + ["--P", "1", "--C", "3", "--gamma", "0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["tau0"] == pytest.approx(0.160, abs=5e-4)
    assert main(base + ["--P", "0", "--C", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["regime"] == "NoCertificate"
    assert main(base + ["--P", "1", "--C", "3", "--C1", "0", "--C0", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["R_bar"] == "inf"
    assert main(["bounds", "--m", "2", "--L", "1", "--alpha", "1", "--beta", "1"]) == 1


def test_outputs_byte_deterministic(tmp_path):
    cfg = write_config(tmp_path, scenario="vector", scenario_params={"n": 8}, horizon=2.0, h=0.1,
                       solver={"alpha": 0.1, "beta": 0.1})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a), "--seed", "4"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--seed", "4"]) == 0
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["run", "--config", cfg, "--out", str(c), "--seed", "5"]) == 0
    assert (a / "run.csv").read_bytes() != (c / "run.csv").read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fopc.cli", "bounds", "--m", "1", "--L", "2", "--alpha", "0.5", "--beta", "0.5", "--C", "5"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["regime"] == "GlobalOh"
