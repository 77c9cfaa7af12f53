import csv
import json

import pytest

from armsim import cli
from armsim.sim_harness import LOG_COLUMNS


def test_seed_range_parsing():
    assert cli._seeds("3..6") == range(3, 7)
    assert cli._seeds("4") == range(4, 5)
    for bad in ("a..b", "5..2", "-1..3", ""):
        with pytest.raises(cli.ConfigError):
            cli._seeds(bad)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--scenario", "empty", "--seed", "0", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["completed"] and metrics["collision_count"] == 0
    header = next(csv.reader((out / "trajectory.csv").open()))
    assert tuple(header) == LOG_COLUMNS
    assert (out / "obstacles.csv").exists()
    assert "completion" in capsys.readouterr().out


def test_run_accepts_a_path(tmp_path):
    doc = {"schema": 1, "name": "short", "run": {"cycles": 1, "max_time": 1.0}}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", "--scenario", str(path), "--controller", "baseline", "--out", str(tmp_path / "o")]) == 0


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 1, "wibble": 3}))
    assert cli.main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "--scenario", "no_such_scenario", "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "--scenario", "empty", "--controller", "pid", "--out", str(tmp_path)]) == 2
    assert cli.main(["batch", "--scenario", "empty", "--seeds", "9..1", "--out", str(tmp_path)]) == 2
    assert cli.main(["verify-invariant", "--scenario", "empty", "--grid", "1", "--out", str(tmp_path / "g.csv")]) == 2
    (tmp_path / "junk.csv").write_text("a,b\n")
    assert cli.main(["emit-plots", "--log", str(tmp_path / "junk.csv"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])
    assert exc.value.code == 2


def test_runtime_failures_exit_3(tmp_path, monkeypatch):
    (tmp_path / "empty_log.csv").write_text(",".join(LOG_COLUMNS) + "\n")
    assert cli.main(["emit-plots", "--log", str(tmp_path / "empty_log.csv"), "--out", str(tmp_path / "p")]) == 3

    real = cli.batch

    def flaky(sc, controllers, seeds, workers=1):
        table, per_run, _ = real(sc, controllers, seeds, workers=workers)
        return table, per_run, [("rmpc", 1, "boom")]

    monkeypatch.setattr(cli, "batch", flaky)
    assert cli.main(["batch", "--scenario", "empty", "--controllers", "rmpc", "--seeds", "0..1",
                     "--out", str(tmp_path / "b")]) == 3


def test_batch_and_plots(tmp_path):
    out = tmp_path / "b"
    assert cli.main(["batch", "--scenario", "empty", "--seeds", "0..1", "--out", str(out)]) == 0
    runs = json.loads((out / "runs.json").read_text())
    assert set(runs) == {"rmpc", "baseline"} and set(runs["rmpc"]) == {"0", "1"}
    assert (out / "summary.csv").exists()
    assert cli.main(["run", "--scenario", "single_flyby", "--out", str(tmp_path / "r")]) == 0
    assert cli.main(["emit-plots", "--log", str(tmp_path / "r" / "trajectory.csv"), "--out", str(tmp_path / "p")]) == 0
    assert {p.name for p in (tmp_path / "p").iterdir()} == {"z4_vs_t.csv", "xy_topdown.csv"}


def test_verify_invariant(tmp_path, capsys):
    path = tmp_path / "grid.csv"
    assert cli.main(["verify-invariant", "--scenario", "empty", "--grid", "3", "--out", str(path)]) == 0
    rows = list(csv.reader(path.open()))
    assert len(rows) == 1 + 81
    assert "36/81" in capsys.readouterr().out
