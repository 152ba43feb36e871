import json
import math
import subprocess
import sys

import pytest

from conftest import canonical_scenario, three_cell_scenario
from robust_merton import LogUtility, PowerUtility, ExponentialUtility
from robust_merton.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_VERIFY, SEED_ENV, main
from robust_merton.scenario_io import dump_scenario, load_scenario, scenario_from_dict, scenario_to_dict


@pytest.fixture
def log_file(tmp_path):
    path = tmp_path / "log.json"
    dump_scenario(canonical_scenario(LogUtility()), path)
    return path


def _csv_summary(path):
    rows = {line.split(",")[0]: line.split(",")[1:] for line in path.read_text().splitlines()[-2:]}
    return [float(v) for v in rows["mean"]], [float(v) for v in rows["std_error"]]


class TestSolve:
    def test_log_report(self, log_file, tmp_path):
        out = tmp_path / "out.json"
        assert main(["solve", str(log_file), "-o", str(out), "--at", "0.5,2.0"]) == EXIT_OK
        report = json.loads(out.read_text())
        assert round(report["cells"][0]["rate"], 6) == 0.013889
        assert report["cells"][0]["C"] == 0.09
        assert report["value_t0_x0"] == pytest.approx(0.0025 / 0.18, rel=1e-14)
        assert report["values"][0]["value"] == pytest.approx(math.log(2.0) + 0.5 * 0.0025 / 0.18, rel=1e-14)
        assert report["tool"]["name"] == "robust-merton"
        assert scenario_from_dict(report["scenario"]) == canonical_scenario(LogUtility())

    def test_nonpositive_eigenvalue(self, log_file, tmp_path, capsys):
        doc = json.loads(log_file.read_text())
        doc["cells"][0]["vol"]["eig_min"] = 0.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert main(["solve", str(bad), "-o", str(tmp_path / "o.json")]) == EXIT_INVALID
        assert "positivity" in capsys.readouterr().err
        assert not (tmp_path / "o.json").exists()

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.json"), "-o", str(tmp_path / "o.json")]) == EXIT_IO

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["solve", str(bad), "-o", str(tmp_path / "o.json")]) == EXIT_IO

    def test_bad_point(self, log_file, tmp_path):
        assert main(["solve", str(log_file), "-o", str(tmp_path / "o.json"), "--at", "oops"]) == EXIT_IO


class TestScenarioFiles:
    @pytest.mark.parametrize("utility", [LogUtility(), PowerUtility(0.3), ExponentialUtility(2.5)])
    def test_round_trip(self, utility, tmp_path):
        sc = three_cell_scenario(utility)
        path = tmp_path / "s.json"
        dump_scenario(sc, path)
        again = load_scenario(path)
        assert again == sc
        assert scenario_to_dict(again) == scenario_to_dict(sc)

    def test_ball_round_trip(self, tmp_path):
        doc = scenario_to_dict(canonical_scenario(LogUtility()))
        doc["cells"][0]["drift"] = {"kind": "ball", "center": [0.07], "radius": 0.1 / 3}
        sc = scenario_from_dict(doc)
        assert scenario_from_dict(scenario_to_dict(sc)) == sc

    def test_unknown_field_rejected(self, log_file, tmp_path):
        doc = json.loads(log_file.read_text())
        doc["extra"] = 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert main(["solve", str(bad), "-o", str(tmp_path / "o.json")]) == EXIT_IO

    def test_wrong_version_rejected(self, log_file, tmp_path):
        doc = json.loads(log_file.read_text())
        doc["version"] = "2"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert main(["solve", str(bad), "-o", str(tmp_path / "o.json")]) == EXIT_IO


class TestSimulate:
    def test_same_seed_same_bytes(self, log_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["simulate", str(log_file), "-o", str(out), "--paths", "2000", "--seed", "7"]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert lines[0] == "path_id,terminal_wealth,terminal_wealth_undiscounted,utility_value"
        assert len(lines) == 2000 + 3
        assert b"\r" not in a.read_bytes()

    def test_zero_paths(self, log_file, tmp_path):
        assert main(["simulate", str(log_file), "-o", str(tmp_path / "o.csv"), "--paths", "0"]) == EXIT_INVALID

    @pytest.mark.parametrize("utility", [LogUtility(), PowerUtility(0.5), ExponentialUtility(1.0)], ids=["log", "power", "exponential"])
    def test_mean_matches_value(self, utility, tmp_path):
        src = tmp_path / "s.json"
        dump_scenario(canonical_scenario(utility, r=0.02), src)
        out = tmp_path / "o.csv"
        assert main(["simulate", str(src), "-o", str(out), "--paths", "100000", "--seed", "3"]) == EXIT_OK
        means, ses = _csv_summary(out)
        report = tmp_path / "r.json"
        main(["solve", str(src), "-o", str(report)])
        v0 = json.loads(report.read_text())["value_t0_x0"]
        assert abs(means[2] - v0) <= 3 * ses[2]

    def test_env_seed(self, log_file, tmp_path, monkeypatch):
        a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
        monkeypatch.setenv(SEED_ENV, "11")
        main(["simulate", str(log_file), "-o", str(a), "--paths", "500"])
        main(["simulate", str(log_file), "-o", str(b), "--paths", "500", "--seed", "11"])
        monkeypatch.delenv(SEED_ENV)
        main(["simulate", str(log_file), "-o", str(c), "--paths", "500"])
        assert a.read_bytes() == b.read_bytes() != c.read_bytes()

    def test_custom_theta(self, log_file, tmp_path):
        theta = tmp_path / "theta.json"
        theta.write_text(json.dumps({"segments": [{"t_start": 0.0, "t_end": 1.0, "mu": [0.05], "sigma": [[0.0]]}]}))
        out = tmp_path / "o.csv"
        assert main(["simulate", str(log_file), "-o", str(out), "--paths", "100", "--theta", str(theta)]) == EXIT_OK
        means, ses = _csv_summary(out)
        # zero volatility: deterministic growth at rate pi * mu
        assert means[0] == pytest.approx(math.exp(5 / 9 * 0.05), rel=1e-12)
        assert ses[0] == 0.0

    def test_theta_horizon_mismatch(self, log_file, tmp_path):
        theta = tmp_path / "theta.json"
        theta.write_text(json.dumps({"segments": [{"t_start": 0.0, "t_end": 2.0, "mu": [0.05], "sigma": [[0.2]]}]}))
        assert main(["simulate", str(log_file), "-o", str(tmp_path / "o.csv"), "--theta", str(theta)]) == EXIT_INVALID


class TestVerify:
    def test_all_suites_pass(self, log_file, tmp_path, capsys):
        out = tmp_path / "v.json"
        assert main(["verify", str(log_file), "-o", str(out), "--seed", "1"]) == EXIT_OK
        report = json.loads(out.read_text())
        assert report["pass"] and set(report["suites"]) == {"saddle", "hjb", "martingale", "shape"}
        assert report["suites"]["saddle"]["cells"][0]["gap"] <= 1e-8
        assert report["suites"]["hjb"]["max_relative_residual"] <= 1e-6
        assert "hjb: PASS" in capsys.readouterr().out

    def test_corrupted_rate_fails_hjb(self, log_file, tmp_path):
        out = tmp_path / "v.json"
        assert main(["verify", str(log_file), "-o", str(out), "--suite", "hjb", "--inject-rate-scale", "1.01"]) == EXIT_VERIFY
        assert json.loads(out.read_text())["suites"]["hjb"]["max_relative_residual"] >= 1e-3

    def test_unknown_suite(self, log_file, tmp_path):
        assert main(["verify", str(log_file), "-o", str(tmp_path / "v.json"), "--suite", "bogus"]) == EXIT_IO

    def test_three_cell_power(self, tmp_path):
        src = tmp_path / "s.json"
        dump_scenario(three_cell_scenario(PowerUtility(0.5)), src)
        assert main(["verify", str(src), "-o", str(tmp_path / "v.json"), "--suite", "saddle"]) == EXIT_OK


def test_module_entry_point(log_file, tmp_path):
    out = tmp_path / "o.json"
    proc = subprocess.run([sys.executable, "-m", "robust_merton", "solve", str(log_file), "-o", str(out)], capture_output=True)
    assert proc.returncode == 0 and out.exists()
    proc = subprocess.run([sys.executable, "-m", "robust_merton"], capture_output=True)
    assert proc.returncode == 1
