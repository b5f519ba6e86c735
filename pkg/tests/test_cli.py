"""Command-line surface: exit codes, report schemas, replayability."""

from __future__ import annotations

import io
import json

import numpy as np
import pytest

from bmdetect import cli


def run_cli(args, stdin_text=None, monkeypatch=None):
    if stdin_text is not None:
        monkeypatch.setattr("sys.stdin", io.StringIO(stdin_text))
    return cli.main(args)


class TestDetect:
    def test_alarm_exits_zero(self, capsys, monkeypatch):
        code = run_cli(["detect", "--m", "0.5", "--gamma", "2"],
                       stdin_text="0.5\n0.5\n", monkeypatch=monkeypatch)
        out = capsys.readouterr().out.strip().splitlines()
        assert code == cli.EXIT_OK
        assert len(out) == 2
        assert out[-1].endswith("ALARM")
        assert out[-1].startswith("2\t")

    def test_empty_stream_exits_two(self, capsys, monkeypatch):
        code = run_cli(["detect", "--m", "0.5", "--gamma", "2"],
                       stdin_text="", monkeypatch=monkeypatch)
        assert code == cli.EXIT_NO_ALARM

    def test_unparseable_line_names_line_number(self, capsys, monkeypatch):
        code = run_cli(["detect", "--m", "0.5", "--gamma", "100"],
                       stdin_text="0.5\n0.5\nabc\n", monkeypatch=monkeypatch)
        err = capsys.readouterr().err
        assert code == cli.EXIT_INPUT_ERROR
        assert "line 3" in err

    def test_out_of_range_value(self, capsys, monkeypatch):
        code = run_cli(["detect", "--m", "0.5", "--gamma", "100"],
                       stdin_text="1.5\n", monkeypatch=monkeypatch)
        assert code == cli.EXIT_INPUT_ERROR
        assert "line 1" in capsys.readouterr().err

    def test_rescaling_window(self, capsys, monkeypatch):
        # Stream in [0, 10] with baseline 5 maps onto the unit interval.
        code = run_cli(["detect", "--m", "0.5", "--gamma", "3",
                        "--lo", "0", "--hi", "10"],
                       stdin_text="5\n5\n5\n5\n", monkeypatch=monkeypatch)
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        assert out[-1].startswith("3\t")

    def test_state_save_and_resume(self, tmp_path, capsys, monkeypatch):
        snap = tmp_path / "state.bin"
        code = run_cli(["detect", "--m", "0.5", "--gamma", "10",
                        "--save-state", str(snap)],
                       stdin_text="0.5\n" * 4, monkeypatch=monkeypatch)
        assert code == cli.EXIT_NO_ALARM
        assert snap.exists()
        code = run_cli(["detect", "--m", "0.5", "--gamma", "10",
                        "--load-state", str(snap)],
                       stdin_text="0.5\n" * 6, monkeypatch=monkeypatch)
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        assert out[-1].startswith("10\t")  # resumed at n = 5..10

    def test_input_file(self, tmp_path, capsys):
        stream = tmp_path / "xs.txt"
        stream.write_text("0.9\n0.9\n0.9\n")
        code = cli.main(["detect", "--m", "0.5", "--gamma", "2",
                         "--input", str(stream)])
        assert code == cli.EXIT_OK


class TestKlinfCommand:
    def test_json_payload(self, capsys):
        code = cli.main(["klinf", "--dist", '{"kind":"bernoulli","p":0.75}',
                         "--m", "0.5", "--oracle"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert abs(payload["value"] - 0.1308120359411370) <= 1e-9
        assert abs(payload["lambda_star"] - 0.5) <= 1e-5
        assert payload["diverges_at_one"] is True
        assert payload["gap"] <= 1e-5

    def test_oracle_requires_discrete(self, capsys):
        code = cli.main(["klinf", "--dist", '{"kind":"beta","a":2,"b":2}',
                         "--m", "0.4", "--oracle"])
        assert code == cli.EXIT_INPUT_ERROR

    def test_bad_literal(self, capsys):
        code = cli.main(["klinf", "--dist", "{broken", "--m", "0.5"])
        assert code == cli.EXIT_INPUT_ERROR


class TestArlCommand:
    def test_report_and_replay(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        csv_path = tmp_path / "table.csv"
        args = ["arl", "--m", "0.5", "--gamma", "20", "--depth", "4",
                "--pre", '{"kind":"bernoulli","p":0.5}', "--reps", "50",
                "--seed", "777", "--out", str(out), "--csv", str(csv_path)]
        assert cli.main(args) == cli.EXIT_OK
        report = json.loads(out.read_text())
        assert report["schema_version"] == 1
        assert report["config"]["master_seed"] == 777
        assert report["results"]["replications"] == 50

        # Replaying the embedded config reproduces the estimate exactly.
        out2 = tmp_path / "report2.json"
        args2 = ["arl", "--m", str(report["config"]["m"]),
                 "--gamma", str(report["config"]["gamma"]),
                 "--depth", str(report["config"]["depth"]),
                 "--pre", json.dumps(report["config"]["pre"]),
                 "--reps", str(report["config"]["reps"]),
                 "--seed", str(report["config"]["master_seed"]),
                 "--out", str(out2)]
        assert cli.main(args2) == cli.EXIT_OK
        replay = json.loads(out2.read_text())
        assert replay["results"]["mean_run_length"] == report["results"]["mean_run_length"]
        assert replay["results"]["std_error"] == report["results"]["std_error"]

        # CSV numbers match the JSON payload.
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "gamma,estimate,se,censor_rate,seed"
        fields = lines[1].split(",")
        assert float(fields[1]) == report["results"]["mean_run_length"]

    def test_misuse_error_propagates(self, capsys):
        code = cli.main(["arl", "--m", "0.5", "--gamma", "10",
                         "--pre", '{"kind":"bernoulli","p":0.9}',
                         "--reps", "10", "--seed", "1"])
        assert code == cli.EXIT_INPUT_ERROR

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "m": 0.5, "gamma": 5, "depth": 3, "reps": 20,
            "master_seed": 3, "pre": {"kind": "point", "x": 0.5}}))
        out = tmp_path / "r.json"
        code = cli.main(["--config", str(cfg), "arl", "--gamma", "7",
                         "--out", str(out)])
        assert code == cli.EXIT_OK
        report = json.loads(out.read_text())
        assert report["config"]["gamma"] == 7.0  # flag wins
        assert report["config"]["depth"] == 3    # config fills the rest


class TestCaddCommand:
    def test_basic_run(self, tmp_path):
        out = tmp_path / "cadd.json"
        code = cli.main(["cadd", "--m", "0.5", "--gamma", "30",
                         "--pre", '{"kind":"bernoulli","p":0.5}',
                         "--post", '{"kind":"bernoulli","p":0.8}',
                         "--k-list", "1,5", "--reps", "80", "--seed", "5",
                         "--out", str(out)])
        assert code == cli.EXIT_OK
        report = json.loads(out.read_text())
        ks = [row["k"] for row in report["results"]["per_k"]]
        assert ks == [1, 5]
        assert report["results"]["pooled"] is not None


class TestSweepCommand:
    def test_single_gamma_omits_slope(self, tmp_path):
        out = tmp_path / "sweep.json"
        code = cli.main(["sweep", "--m", "0.5", "--gamma-grid", "20",
                         "--pre", '{"kind":"bernoulli","p":0.5}',
                         "--post", '{"kind":"bernoulli","p":0.8}',
                         "--reps-arl", "30", "--reps-cadd", "30",
                         "--depth", "4", "--seed", "2", "--out", str(out)])
        assert code == cli.EXIT_OK
        report = json.loads(out.read_text())
        assert report["results"]["slope_fit"] is None
        assert len(report["results"]["table"]) == 1

    def test_csv_matches_json(self, tmp_path):
        out = tmp_path / "sweep.json"
        csv_path = tmp_path / "sweep.csv"
        code = cli.main(["sweep", "--m", "0.5", "--gamma-grid", "10,30",
                         "--pre", '{"kind":"point","x":0.5}',
                         "--post", '{"kind":"bernoulli","p":0.9}',
                         "--reps-arl", "20", "--reps-cadd", "20",
                         "--depth", "4", "--seed", "4",
                         "--out", str(out), "--csv", str(csv_path)])
        assert code == cli.EXIT_OK
        report = json.loads(out.read_text())
        rows = csv_path.read_text().strip().splitlines()[1:]
        for json_row, csv_row in zip(report["results"]["table"], rows):
            fields = csv_row.split(",")
            assert float(fields[0]) == json_row["gamma"]
            assert float(fields[1]) == json_row["cadd"]

    def test_post_law_below_baseline_rejected(self):
        code = cli.main(["sweep", "--m", "0.5", "--gamma-grid", "10",
                         "--pre", '{"kind":"bernoulli","p":0.5}',
                         "--post", '{"kind":"bernoulli","p":0.4}',
                         "--reps-arl", "10", "--reps-cadd", "10",
                         "--seed", "1"])
        assert code == cli.EXIT_INPUT_ERROR


class TestVerifyCommand:
    def test_unknown_suite_is_usage_error(self, capsys):
        assert cli.main(["verify", "--suite", "bogus"]) == cli.EXIT_INPUT_ERROR

    def test_fast_suite_runs(self, capsys):
        code = cli.main(["verify", "--suite", "fast"])
        out = capsys.readouterr().out
        assert "checks passed" in out
        assert code in (cli.EXIT_OK, cli.EXIT_VERIFY_FAILED)
        assert code == cli.EXIT_OK  # the fast suite must be green


class TestLabCommand:
    def test_blocks(self, capsys):
        code = cli.main(["lab", "blocks", "--law", '{"atoms": [[10, 1.0]]}',
                         "--f", "5", "--gamma", "10"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["r_star"] == 1
        assert payload["ratio"] <= payload["bound"]

    def test_schedule(self, capsys):
        code = cli.main(["lab", "schedule"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["rows"]) == 4
        assert payload["limits"]["exp_ratio"] == 0.0

    def test_com_check(self, capsys):
        code = cli.main(["lab", "com-check", "--p", "0.5", "--q", "0.75",
                         "--k", "2", "--horizon", "4", "--threshold", "2"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["max_abs_gap"] <= 1e-12
        assert payload["prefix_gap"] <= 1e-12

    def test_slln(self, capsys):
        # note the = form: a leading dash in the value list confuses argparse
        code = cli.main(["lab", "slln", "--values=-1,1", "--probs",
                         "0.5,0.5", "--eta", "0.5", "--n-grid", "10,50",
                         "--reps", "500", "--seed", "9"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["probes"]) == 2

    def test_bad_law_literal(self, capsys):
        code = cli.main(["lab", "blocks", "--law", "{bad", "--f", "2",
                         "--gamma", "5"])
        assert code == cli.EXIT_INPUT_ERROR
