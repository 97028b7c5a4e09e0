"""Command-line interface: output formats, exits, config precedence."""

import json
import os
import subprocess
import sys

import pytest

import stockloan.cli as cli


BASE = ["--r", "0.06", "--delta", "0.03", "--sigma", "0.4",
        "--principal", "0.7", "--loan-rate", "0.1", "--maturity", "1.0"]
PRICE = ["price", "--regime", "1", "--spot", "0.8",
         "--solver", "lattice", "--steps", "400"] + BASE


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_price_golden_stdout(capsys):
    code, out, err = run(PRICE, capsys)
    assert code == 0
    assert err == ""
    assert out == "0.15267830681784181\n"
    # printed with repr-roundtrip precision
    assert float(out) == 0.15267830681784181


def test_price_output_file(tmp_path, capsys):
    target = tmp_path / "value.txt"
    code, out, _ = run(PRICE + ["--output", str(target)], capsys)
    assert code == 0
    assert out == ""
    assert target.read_text() == "0.15267830681784181\n"


def test_value_error_exits_2(capsys):
    code, out, err = run(["price", "--regime", "9", "--spot", "0.8"] + BASE, capsys)
    assert code == 2
    assert out == ""
    assert err.startswith("error:")
    code, _, err = run(["price", "--regime", "1", "--spot", "-2.0",
                        "--solver", "lattice"] + BASE, capsys)
    assert code == 2
    assert "spot" in err


def test_runtime_error_exits_3(monkeypatch, capsys):
    def boom(cfg):
        raise RuntimeError("iteration stalled")

    monkeypatch.setattr(cli, "cmd_price", boom)
    code, _, err = run(PRICE, capsys)
    assert code == 3
    assert err.startswith("solver error:")


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit):
        cli.main(["price", "--frobnicate", "1"])


def test_flag_overrides_config_file(tmp_path, capsys):
    config = {"r": 0.06, "delta": 0.03, "sigma": 0.4, "principal": 0.7,
              "loan_rate": 0.1, "maturity": 1.0, "regime": 1, "spot": 0.8,
              "solver": "lattice", "steps": 400}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    _, from_config, _ = run(["price", "--config", str(path)], capsys)
    assert from_config == "0.15267830681784181\n"
    _, overridden, _ = run(["price", "--config", str(path), "--sigma", "0.2"], capsys)
    _, direct, _ = run(["price", "--regime", "1", "--spot", "0.8", "--solver",
                        "lattice", "--steps", "400", "--r", "0.06", "--delta",
                        "0.03", "--sigma", "0.2", "--principal", "0.7",
                        "--loan-rate", "0.1", "--maturity", "1.0"], capsys)
    assert overridden == direct
    assert overridden != from_config


def test_perpetual_unbounded_prints_inf(capsys):
    code, out, _ = run(["perpetual", "--regime", "2"] + BASE, capsys)
    assert code == 0
    assert "x_star_inf=inf" in out.splitlines()


def test_boundary_csv_schema(capsys):
    code, out, _ = run(["boundary", "--regime", "1", "--solver", "lattice",
                        "--steps", "80"] + BASE, capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# stockloan-csv-v1"
    assert lines[1].startswith("# config: ")
    config = json.loads(lines[1][len("# config: "):])
    assert config["steps"] == 80
    assert config["sigma"] == 0.4
    assert lines[2] == "tau,x_star"
    assert len(lines) == 3 + 81
    first = lines[3].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == pytest.approx(0.7, abs=0.02)


def test_sweep_csv(capsys):
    code, out, _ = run(["sweep", "--param", "spot", "--values", "0.5,0.8,1.1",
                        "--regime", "1", "--solver", "lattice",
                        "--steps", "200"] + BASE, capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[2] == "spot,value"
    rows = [tuple(float(v) for v in line.split(",")) for line in lines[3:]]
    assert [r[0] for r in rows] == pytest.approx([0.5, 0.8, 1.1])
    values = [r[1] for r in rows]
    assert values == sorted(values)


def test_figure_boundary_comparison_defaults(capsys):
    argv = ["figure", "2", "--space-nodes", "80", "--time-steps", "40",
            "--r", "0.06", "--delta", "0.03", "--principal", "0.7",
            "--loan-rate", "0.1", "--maturity", "1.0"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    lines = out.splitlines()
    config = json.loads(lines[1][len("# config: "):])
    assert config["sigma"] == 0.15
    assert config["solver"] == "fd"
    assert config["regime"] == 1
    assert lines[2] == "tau,x1_star,x2_star,x3_star"
    assert len(lines) == 3 + 41


def test_figure_account_boundary_defaults(capsys):
    argv = ["figure", "3", "--x-nodes", "60", "--a-nodes", "10",
            "--fsg-steps", "40", "--r", "0.06", "--delta", "0.03",
            "--sigma", "0.4", "--principal", "0.7", "--loan-rate", "0.1"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    lines = out.splitlines()
    config = json.loads(lines[1][len("# config: "):])
    assert config["maturity"] == 3.0
    assert config["solver"] == "fsg"
    assert config["regime"] == 4
    assert lines[2] == "a,x_star"


def test_oracle_check_reports_diff(capsys):
    code, out, _ = run(["oracle-check", "--regime", "1", "--spot", "0.8",
                        "--solver", "lattice", "--steps", "12",
                        "--oracle-steps", "12"] + BASE, capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("solver_value=")
    assert lines[1].startswith("oracle_value=")
    assert lines[2].startswith("abs_diff=")
    assert float(lines[2].split("=")[1]) == 0.0


def test_byte_determinism_across_processes():
    env = dict(os.environ)
    outputs = []
    for threads in ("1", "4"):
        env["STOCKLOAN_THREADS"] = threads
        result = subprocess.run([sys.executable, "-m", "stockloan"] + PRICE,
                                capture_output=True, env=env, check=True)
        outputs.append(result.stdout)
    result = subprocess.run([sys.executable, "-m", "stockloan"] + PRICE,
                            capture_output=True, env=env, check=True)
    outputs.append(result.stdout)
    assert outputs[0] == outputs[1] == outputs[2] == b"0.15267830681784181\n"
