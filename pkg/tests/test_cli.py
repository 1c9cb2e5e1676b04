import csv
import json

import pytest

from lqr_autotune.artifacts import history_header
from lqr_autotune.cli import main

FAST = ["--horizon-s", "3", "--burn-in-s", "1",
        "--n-representers", "40", "--n-mc-samples", "200"]


def run_cli(argv):
    return main(argv)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_tune_writes_artifact(tmp_path):
    out = tmp_path / "runs"
    code = run_cli(["tune", "--preset", "good2d", "--iterations", "2",
                    "--seed", "7", "--output-dir", str(out),
                    "--run-name", "smoke", *FAST])
    assert code == 0
    run_dir = out / "smoke"
    assert (run_dir / "config.json").is_file()
    assert (run_dir / "history.csv").is_file()
    assert (run_dir / "surrogate_final.json").is_file()
    rows = read_rows(run_dir / "history.csv")
    assert rows[0] == history_header(2)
    assert len(rows) == 1 + 5 + 2  # header + corner init + iterations
    config = json.loads((run_dir / "config.json").read_text())
    assert config["master_seed"] == 7
    assert config["plant"]["r"] == pytest.approx(0.33)


def test_tune_history_schema_and_stability_flags(tmp_path):
    out = tmp_path / "runs"
    run_cli(["tune", "--preset", "good2d", "--iterations", "1", "--seed", "1",
             "--output-dir", str(out), "--run-name", "r", *FAST])
    rows = read_rows(out / "r" / "history.csv")
    header = rows[0]
    assert header[:4] == ["iter", "theta1", "theta2", "j_hat"]
    assert header[4] == "stable"
    assert header[-3:] == ["sigma", "sigma_n", "wall_ms"]
    for row in rows[1:]:
        assert row[4] in ("true", "false")
        float(row[3])
        assert row[-1] == "0.0"  # wall time zeroed for reproducibility


def test_tune_byte_identical_reruns(tmp_path):
    args = ["tune", "--preset", "good2d", "--iterations", "2", "--seed", "3",
            "--output-dir", str(tmp_path), *FAST]
    assert run_cli(args + ["--run-name", "a"]) == 0
    assert run_cli(args + ["--run-name", "b"]) == 0
    hist_a = (tmp_path / "a" / "history.csv").read_bytes()
    hist_b = (tmp_path / "b" / "history.csv").read_bytes()
    assert hist_a == hist_b


def test_tune_trace_and_trajectories(tmp_path):
    out = tmp_path / "runs"
    code = run_cli(["tune", "--preset", "good2d", "--iterations", "1",
                    "--seed", "2", "--output-dir", str(out), "--run-name", "t",
                    "--save-trace", "--save-trajectories", *FAST])
    assert code == 0
    trace = json.loads((out / "t" / "trace.json").read_text())
    assert len(trace) == 1
    assert {"iteration", "candidates", "gains", "pmin", "best_guess"} == set(trace[0])
    episodes = sorted((out / "t" / "trajectories").glob("episode_*.csv"))
    assert len(episodes) == 6


def test_tune_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "preset": "good2d", "iterations": 1, "seed": 5,
        "horizon_s": 3.0, "burn_in_s": 1.0,
        "n_representers": 40, "n_mc_samples": 200,
    }))
    out = tmp_path / "runs"
    code = run_cli(["tune", "--config", str(cfg), "--output-dir", str(out),
                    "--run-name", "c", "--iterations", "2"])
    assert code == 0
    rows = read_rows(out / "c" / "history.csv")
    assert len(rows) == 1 + 5 + 2  # flag overrides the config file


def test_tune_missing_config_exits_2(tmp_path):
    out = tmp_path / "runs"
    code = run_cli(["tune", "--config", str(tmp_path / "nope.json"),
                    "--output-dir", str(out)])
    assert code == 2
    assert not out.exists()


def test_tune_bad_config_key_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "good2d", "bogus_key": 1}))
    assert run_cli(["tune", "--config", str(cfg),
                    "--output-dir", str(tmp_path / "runs")]) == 2


def test_validate_prints_and_writes_csv(tmp_path, capsys):
    out = tmp_path / "v"
    code = run_cli(["validate", "--preset", "good2d", "--theta", "2,4",
                    "--episodes", "3", "--seed", "5", "--output-dir", str(out),
                    "--horizon-s", "3", "--burn-in-s", "1"])
    assert code == 0
    captured = capsys.readouterr().out
    assert "mean=" in captured and "std=" in captured and "stable=3/3" in captured
    rows = read_rows(out / "validation.csv")
    assert rows[0] == ["episode", "j_hat", "stable"]
    assert rows[-2][0] == "mean"
    assert rows[-1][0] == "std"
    assert len(rows) == 1 + 3 + 2


def test_validate_single_episode_std_zero(tmp_path, capsys):
    code = run_cli(["validate", "--preset", "good2d", "--theta", "2,4",
                    "--episodes", "1", "--seed", "5",
                    "--output-dir", str(tmp_path),
                    "--horizon-s", "3", "--burn-in-s", "1"])
    assert code == 0
    assert "std=0.000000" in capsys.readouterr().out


def test_validate_out_of_domain_exits_2(tmp_path):
    code = run_cli(["validate", "--preset", "good2d", "--theta", "50,4",
                    "--episodes", "1", "--output-dir", str(tmp_path)])
    assert code == 2


def test_simulate_zero_duration_header_only(tmp_path):
    code = run_cli(["simulate", "--preset", "good2d", "--theta", "2,4",
                    "--duration", "0", "--seed", "1",
                    "--output-dir", str(tmp_path)])
    assert code == 0
    rows = read_rows(tmp_path / "trajectory.csv")
    assert rows == [["k", "t", "psi", "psi_dot", "s", "s_dot", "z", "u"]]


def test_simulate_stable_controller_keeps_angle_small(tmp_path):
    code = run_cli(["simulate", "--preset", "good2d", "--theta", "2,4",
                    "--duration", "120", "--seed", "1",
                    "--output-dir", str(tmp_path), "--traj-downsample", "100"])
    assert code == 0
    rows = read_rows(tmp_path / "trajectory.csv")
    assert len(rows) == 1 + 1200
    assert abs(float(rows[-1][2])) < 0.35


def test_simulate_zero_gain_stops_at_violation(tmp_path):
    code = run_cli(["simulate", "--preset", "good2d", "--gain", "zero",
                    "--duration", "60", "--seed", "1",
                    "--output-dir", str(tmp_path)])
    assert code == 0
    rows = read_rows(tmp_path / "trajectory.csv")
    last = rows[-1]
    assert abs(float(last[2])) > 0.35  # ends on the angle violation row
    assert len(rows) < 60_000


def test_simulate_invalid_gain_dimensions_exits_2(tmp_path):
    code = run_cli(["simulate", "--preset", "good2d", "--gain", "1,2,3",
                    "--duration", "1", "--output-dir", str(tmp_path)])
    assert code == 2


def test_simulate_requires_theta_or_gain(tmp_path):
    code = run_cli(["simulate", "--preset", "good2d", "--duration", "1",
                    "--output-dir", str(tmp_path)])
    assert code == 2


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--preset", "good2d", "--theta", "1,1",
            "--duration", "2", "--seed", "9"]
    run_cli(args + ["--output-dir", str(tmp_path / "x")])
    run_cli(args + ["--output-dir", str(tmp_path / "y")])
    a = (tmp_path / "x" / "trajectory.csv").read_bytes()
    b = (tmp_path / "y" / "trajectory.csv").read_bytes()
    assert a == b


def test_output_dir_env_default(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LQR_AUTOTUNE_OUT", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    code = run_cli(["simulate", "--preset", "good2d", "--theta", "2,4",
                    "--duration", "0", "--seed", "1"])
    assert code == 0
    assert (tmp_path / "envout" / "trajectory.csv").is_file()
