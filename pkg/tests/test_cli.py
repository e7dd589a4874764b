import csv
import subprocess
import sys

import pytest

from seqdec.cli import main, read_results
from seqdec.config import load_config, parse_config, scaffold

MINIMAL = """\
[experiment]
id = minimal
mode = simulate
paths = 100
seed = 5

[model]
variant = base
horizon = 10

[policy]
id = zero
"""

TUNE = """\
[experiment]
id = tune
mode = tune
paths = 3
seed = 1

[model]
horizon = 4

[policy]
id = pfa-threshold

[tuning]
method = grid
n_paths = 2
domain.theta_charge = 0, 9, 1
domain.theta_discharge = 30, 39, 1
"""

EXACT = """\
[experiment]
id = exact
mode = solve-exact
seed = 0

[model]
horizon = 6

[exact]
n_R = 11
price_levels = 20, 30, 40
gamma = 0.9
method = {method}
"""


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write(path, text):
    path.write_text(text)
    return str(path)


def test_init_roundtrip(work):
    assert main(["init"]) == 0
    assert load_config("experiment.ini") == scaffold()
    assert parse_config(scaffold().to_ini()).to_ini() == scaffold().to_ini()
    assert main(["init"]) == 1  # never overwrites


def test_minimal_run(work):
    cfg = write(work / "m.ini", MINIMAL)
    assert main(["run", "--config", cfg, "--out", "out"]) == 0
    rows = read_results(work / "out" / "results.csv")
    assert len(rows) == 1
    assert rows[0]["policy_id"] == "zero" and int(rows[0]["paths"]) == 100
    assert float(rows[0]["mean"]) <= 0.0
    assert (work / "out" / "trajectory_policy_0.csv").exists()


def test_run_is_byte_identical(work):
    cfg = write(work / "m.ini", MINIMAL.replace("id = zero", "id = pfa-threshold"))
    assert main(["run", "--config", cfg, "--out", "a"]) == 0
    assert main(["run", "--config", cfg, "--out", "b"]) == 0
    assert (work / "a" / "results.csv").read_bytes() == (work / "b" / "results.csv").read_bytes()


def test_overrides(work):
    cfg = write(work / "m.ini", MINIMAL)
    assert main(["run", "--config", cfg, "--out", "a", "--paths", "7", "--seed", "3"]) == 0
    assert main(["run", "--config", cfg, "--out", "b", "--paths", "7", "--seed", "4"]) == 0
    ra, rb = read_results(work / "a" / "results.csv"), read_results(work / "b" / "results.csv")
    assert ra[0]["paths"] == "7" and ra[0]["mean"] != rb[0]["mean"]
    assert main(["run", "--config", cfg, "--paths", "0"]) == 1


@pytest.mark.parametrize("method", ["value-iteration", "backward-dp"])
def test_solve_exact_bit_identical(work, method):
    text = EXACT.format(method=method) + ("horizon = 6\n" if method == "backward-dp" else "")
    cfg = write(work / "e.ini", text)
    assert main(["solve-exact", "--config", cfg, "--out", "a"]) == 0
    assert main(["solve-exact", "--config", cfg, "--out", "b"]) == 0
    for name in ("values.csv", "policy.csv", "mdp.txt", "results.csv"):
        assert (work / "a" / name).read_bytes() == (work / "b" / name).read_bytes()
    with open(work / "a" / "policy.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) % 33 == 0 and {r["signal"] for r in rows} <= {"-1", "0", "1"}
    assert float(read_results(work / "a" / "results.csv")[0]["mean"]) > 0.0  # buy at 20, sell at 40


def test_tune_trace_and_surface(work):
    cfg = write(work / "t.ini", TUNE)
    assert main(["tune", "--config", cfg, "--out", "out"]) == 0
    with open(work / "out" / "trace.csv") as fh:
        trace = list(csv.reader(fh))
    assert trace[0] == ["candidate", "theta_charge", "theta_discharge", "mean", "stderr", "paths"]
    assert len(trace) - 1 == 100
    res = read_results(work / "out" / "results.csv")
    assert len(res) == 1 and res[0]["paths"] == "3" and "theta_charge=" in res[0]["theta"]
    assert main(["plot-data", "--out", "out", "--kind", "tuning-surface"]) == 0
    with open(work / "out" / "plot_tuning_surface.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 100


def test_plot_data_policy_comparison(work):
    cfg = write(work / "m.ini", MINIMAL.replace("paths = 100", "paths = 4"))
    assert main(["bound", "--config", cfg, "--out", "out"]) == 0
    assert main(["plot-data", "--out", "out"]) == 0
    with open(work / "out" / "plot_policy_comparison.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and float(rows[0]["mean"]) <= float(rows[0]["bound"]) + 1e-6
    assert (work / "out" / "plot_trajectory.csv").exists()


def test_plot_data_without_results(work, capsys):
    assert main(["plot-data", "--out", "nothing"]) == 1
    (work / "empty").mkdir()
    (work / "empty" / "results.csv").write_text(
        "experiment_id,policy_id,theta,mean,stderr,paths,bound_mean,runtime_ms\n")
    assert main(["plot-data", "--out", "empty"]) == 1
    assert "no result rows" in capsys.readouterr().err


@pytest.mark.parametrize("text, where", [
    (MINIMAL + "bogus = 1\n", "[policy] bogus"),
    (MINIMAL.replace("seed = 5\n", ""), "[experiment] seed"),
    (MINIMAL.replace("horizon = 10", "horizon = -1"), "[model] horizon"),
    (MINIMAL.replace("variant = base", "variant = nope"), "[model] variant"),
    (MINIMAL.replace("id = zero", "id = unknown-policy"), "[policy] id"),
    (MINIMAL + "[nonsense]\nx = 1\n", "nonsense"),
    (MINIMAL.replace("mode = simulate", "mode = fly"), "[experiment] mode"),
])
def test_config_errors_name_the_key(work, capsys, text, where):
    cfg = write(work / "bad.ini", text)
    assert main(["run", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and where in err


def test_module_entry_point(work):
    cfg = write(work / "m.ini", MINIMAL.replace("paths = 100", "paths = 2"))
    proc = subprocess.run([sys.executable, "-m", "seqdec", "run", "--config", cfg, "--out", "o"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "zero: mean" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "seqdec", "run", "--config", "missing.ini"],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "error" in proc.stderr
