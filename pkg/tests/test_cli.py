import json
import subprocess
import sys

import pytest
import yaml

from memsynapse import cli, config
from memsynapse.errors import SolverError
from memsynapse.tables import read_csv

SMALL = {
    "sweep_set": {"v_gates": [0.8, 1.2]},
    "sweep_read": {"v_gates": [0.6, 0.7]},
    "monte_carlo": {"n": 200, "set_gates": [0.8, 1.2], "read_resistances": [5e3, 50e3],
                    "a_vth": 46.0},
    "snn": {"datasets": ["wine"], "seeds": [0], "population": 4, "generations": 2},
}

EXPECTED = {
    "calibrate": ["device_params", "anchors", "memristor_params"],
    "sweep-set": ["set_sweep"],
    "sweep-read": ["read_sweep", "read_levels", "read_power"],
    "mc-set": ["mismatch", "mc_set", "mc_set_hist"],
    "mc-read": ["mismatch", "mc_read", "mc_read_hist"],
    "readability": ["resolution_table", "readability"],
    "snn-train": ["snn_train"],
    "snn-cases": ["snn_cases"],
}
EXPECTED["report-all"] = sorted({stem for k, v in EXPECTED.items() if k != "snn-train" for stem in v})


def _config(tmp_path, data=SMALL, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _run(tmp_path, experiment, *extra, data=SMALL):
    out = tmp_path / "out"
    code = cli.main([experiment, "--config", _config(tmp_path, data), "--out", str(out), *extra])
    return code, out


def _csvs(run_dir):
    return {p.name: p.read_bytes() for p in sorted(run_dir.glob("*.csv"))}


@pytest.mark.parametrize("experiment", sorted(EXPECTED))
def test_each_experiment_writes_its_tables(tmp_path, experiment):
    code, out = _run(tmp_path, experiment)
    assert code == 0
    run_dir = out / experiment / "run-0001"
    for stem in EXPECTED[experiment]:
        assert (run_dir / f"{stem}.csv").exists() and (run_dir / f"{stem}.dat").exists()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["experiment"] == experiment and manifest["seed"] == 0
    assert set(manifest["files"]) >= {f"{s}.csv" for s in EXPECTED[experiment]}
    resolved = yaml.safe_load((run_dir / "resolved_config.yaml").read_text())
    assert resolved == config.resolve(SMALL, experiment=experiment)
    assert manifest["input_hash"] == config.digest(resolved)


def test_documented_headers(tmp_path):
    _, out = _run(tmp_path, "readability")
    header, rows = read_csv(out / "readability" / "run-0001" / "resolution_table.csv")
    assert header == ["case", "level_ohm", "code", "i2_amp", "readable"]
    assert len(rows) == 96 and rows[0][2] == "0000" and rows[15][2] == "1111"
    dat = (out / "readability" / "run-0001" / "resolution_table.dat").read_text()
    assert dat.startswith("# case level_ohm code i2_amp readable\n")


@pytest.mark.parametrize("experiment", ["sweep-set", "mc-read", "snn-cases"])
def test_reruns_are_byte_identical(tmp_path, experiment):
    _run(tmp_path, experiment)
    _run(tmp_path, experiment)
    base = tmp_path / "out" / experiment
    a, b = _csvs(base / "run-0001"), _csvs(base / "run-0002")
    assert a and a == b


def test_resolved_config_reproduces_outputs(tmp_path):
    _, out = _run(tmp_path, "mc-set")
    first = out / "mc-set" / "run-0001"
    code = cli.main(["mc-set", "--config", str(first / "resolved_config.yaml"), "--out", str(out)])
    assert code == 0
    assert _csvs(first) == _csvs(out / "mc-set" / "run-0002")


def test_seed_flag_overrides_config(tmp_path):
    _run(tmp_path, "mc-read")
    _run(tmp_path, "mc-read", "--seed", "7")
    base = tmp_path / "out" / "mc-read"
    assert _csvs(base / "run-0001")["mc_read.csv"] != _csvs(base / "run-0002")["mc_read.csv"]
    assert json.loads((base / "run-0002" / "manifest.json").read_text())["seed"] == 7


def test_threads_do_not_change_outputs(tmp_path):
    _run(tmp_path, "mc-set", "--threads", "1")
    _run(tmp_path, "mc-set", "--threads", "3")
    base = tmp_path / "out" / "mc-set"
    assert _csvs(base / "run-0001") == _csvs(base / "run-0002")


def test_runs_are_append_only(tmp_path):
    _run(tmp_path, "calibrate")
    first = tmp_path / "out" / "calibrate" / "run-0001"
    before = {p.name: p.read_bytes() for p in first.iterdir()}
    _run(tmp_path, "calibrate")
    assert {p.name: p.read_bytes() for p in first.iterdir()} == before
    assert (tmp_path / "out" / "calibrate" / "run-0002").is_dir()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["calibrate"]) == 0
    assert (tmp_path / "env" / "calibrate" / "run-0001" / "anchors.csv").exists()


def test_negative_width_exits_1_naming_field(tmp_path, capsys):
    code, _ = _run(tmp_path, "sweep-set", data={"sizing": {"mn1": {"width": -1.0}}})
    assert code == 1
    assert "sizing.mn1.width" in capsys.readouterr().err


@pytest.mark.parametrize("data,key", [
    ({"modle": {}}, "modle"),
    ({"sizing": {"mn3": {"width": 1.0}}}, "sizing.mn3"),
    ({"monte_carlo": {"n": 10}}, "monte_carlo.n"),
])
def test_invalid_config_exits_1(tmp_path, capsys, data, key):
    code, _ = _run(tmp_path, "calibrate", data=data)
    assert code == 1
    assert key in capsys.readouterr().err


def test_malformed_yaml_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    assert cli.main(["calibrate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert cli.main(["calibrate", "--config", str(tmp_path / "nope.yaml")]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_dataset_exits_1(tmp_path, capsys):
    data = {"snn": {"datasets": [str(tmp_path / "absent.csv")], "seeds": [0], "population": 4,
                    "generations": 1}}
    code, _ = _run(tmp_path, "snn-train", data=data)
    assert code == 1
    assert "absent.csv" in capsys.readouterr().err


def test_numerical_failure_exits_2(tmp_path, monkeypatch, capsys):
    def boom(ctx):
        raise SolverError("no bracket")

    monkeypatch.setitem(cli.RUNNERS, "calibrate", boom)
    code, _ = _run(tmp_path, "calibrate")
    assert code == 2
    assert "numerical failure" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "memsynapse.cli", "calibrate", "--out",
                          str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.strip().endswith("run-0001")
