import csv
import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from riskcert.cli import main
from riskcert.config import ExperimentConfig, TriggerSpec, dump_config, parse_config, preset
from riskcert.errors import InvalidInputError
from riskcert.reports import SWEEP_COLUMNS, certify_report, sweep_rows


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestCertify:
    def test_radius_six(self, tmp_path, capsys):
        code, out, _ = _run(capsys, "certify", "--preset", "paper-example", "-r", "6", "--out", str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["ultimate_radius"] == pytest.approx(2.94, abs=0.01)
        assert report["sigma_max"]["sigma1"] == pytest.approx(1.36, abs=0.01)
        assert report["sigma_max"]["sigma2"] == pytest.approx(0.99, abs=0.01)
        assert report["sigma_max"]["sigma3"] is None
        assert report["certificates"]["ultimate_bound"]["satisfied"]
        assert not report["certificates"]["invariance"]["satisfied"]
        assert "sigma1_max = 1.36" in out

    def test_radius_ten(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "certify", "--preset", "paper-example", "-r", "10", "--out", str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["invariance_radius"] == pytest.approx(6.54, abs=0.01)
        assert report["sigma_max"]["sigma4"] == pytest.approx(1.11, abs=0.01)
        assert report["certificates"]["invariance"]["satisfied"]
        assert report["certificates"]["robust_invariance"]["satisfied"]

    def test_radius_one_infeasible(self, tmp_path, capsys):
        code, _, err = _run(capsys, "certify", "-r", "1", "--out", str(tmp_path))
        assert code == 3
        assert json.loads(err.strip().splitlines()[-1])["error"] == "infeasible-radius"
        report = json.loads((tmp_path / "report.json").read_text())
        certs = report["certificates"]
        assert not certs["ultimate_bound"]["satisfied"] and not certs["invariance"]["satisfied"]
        assert all(v is None for v in report["sigma_max"].values())

    def test_configured_trigger_controls_exit(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "certify", "-r", "6", "--trigger", "cor3", "--out", str(tmp_path))
        assert code == 3

    def test_report_numbers_trace_to_library(self, example_cl):
        report = certify_report(preset("paper-example").with_overrides(radius=10.0))
        assert report["norm_A_cl"] == example_cl.norm_acl
        assert report["trace_P"] == pytest.approx(np.trace(example_cl.lyapunov), rel=1e-15)


class TestSimulate:
    def test_outputs(self, tmp_path, capsys):
        code, out, _ = _run(
            capsys, "simulate", "--runs", "100", "--seed", "42", "--baseline-periodic", "--out", str(tmp_path)
        )
        assert code == 0
        assert "updates mean" in out
        with open(tmp_path / "trajectory_42.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "x1", "x2", "u1", "norm_sq", "triggered"]
        assert len(rows) == 62
        assert rows[1][-1] == "1" and rows[-1][-1] == ""
        x = np.array([float(v) for v in rows[5][1:3]])
        assert float(rows[5][4]) == pytest.approx(x @ x, rel=1e-12)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["baseline_periodic"]["update_counts"]["mean"] == 60
        assert len(summary["event_triggered"]["cvar"]) == 61
        assert summary["certificate"]["kind"]
        assert (tmp_path / "trajectory_42_periodic.csv").exists()

    def test_mean_update_count(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "simulate", "--runs", "500", "--out", str(tmp_path))
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert 20 <= summary["event_triggered"]["update_counts"]["mean"] <= 35

    def test_student_t_respects_envelope(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "simulate", "--sampler", "student_t", "--runs", "1000", "--out", str(tmp_path))
        assert code == 0
        event = json.loads((tmp_path / "summary.json").read_text())["event_triggered"]
        cvar, se, env = (np.array(event[k]) for k in ("cvar", "cvar_stderr", "envelope"))
        assert np.all(cvar <= env + 3 * se)

    def test_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            _run(capsys, "simulate", "--runs", "50", "--seed", "9", "--out", str(tmp_path / name))
        for f in ("trajectory_9.csv", "summary.json"):
            assert (tmp_path / "a" / f).read_text() == (tmp_path / "b" / f).read_text()

    def test_zero_horizon_rejected(self, tmp_path, capsys):
        code, _, err = _run(capsys, "simulate", "--horizon", "0", "--out", str(tmp_path))
        assert code == 2
        assert json.loads(err)["error"] == "invalid-config"


class TestSweep:
    def test_sigma_sweep_monotone(self, tmp_path, capsys):
        cfg = preset("paper-example")
        sigma_max = certify_report(cfg)["sigma_max"]["sigma1"]
        grid = np.linspace(0.0, sigma_max, 8)
        code, _, _ = _run(
            capsys, "sweep", "--param", "sigma", "--grid", ",".join(f"{g:.6f}" for g in grid), "--out", str(tmp_path)
        )
        assert code == 0
        with open(tmp_path / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == list(SWEEP_COLUMNS)
        counts = [float(r["mean_updates"]) for r in rows]
        assert counts[0] == 60.0
        assert spearmanr(grid, counts).statistic < 0

    def test_epsilon_sweep(self):
        rows = sweep_rows(preset("paper-example").with_overrides(runs=20), "epsilon", [0.1, 0.3, 0.5])
        sigmas = [r["sigma_max"] for r in rows]
        assert sigmas[0] < sigmas[1] < sigmas[2]

    def test_single_point_matches_certify(self):
        cfg = preset("paper-example").with_overrides(runs=20)
        (row,) = sweep_rows(cfg, "r", [6.0])
        report = certify_report(cfg)
        assert row["sigma_max"] == report["sigma_max"]["sigma1"]
        assert row["ultimate_radius"] == report["ultimate_radius"]
        assert row["invariance_radius"] == report["invariance_radius"]

    def test_infeasible_rows_marked(self):
        rows = sweep_rows(preset("paper-example").with_overrides(runs=20), "r", [1.0, 6.0])
        assert rows[0]["status"] == "infeasible-radius" and rows[1]["status"] == "ok"

    def test_bad_grid(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "sweep", "--param", "r", "--grid", "a,b", "--out", str(tmp_path))
        assert code == 2
        with pytest.raises(InvalidInputError):
            sweep_rows(preset("paper-example"), "r", [])


class TestConfig:
    def test_round_trip(self):
        text = dump_config(preset("paper-example"))
        assert dump_config(parse_config(text)) == text
        cfg = parse_config("radius: 10\ntrigger: cor4\nsampler: uniform\n")
        assert cfg.sampler == "scaled_uniform"
        assert dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)

    def test_trigger_forms(self):
        assert TriggerSpec.parse("sigma=0.5") == TriggerSpec(corollary=None, sigma=0.5)
        assert TriggerSpec.parse({"corollary": 4, "kind": "input_error_rel"}).kind == "input_error_rel"
        assert TriggerSpec.parse("cor2").kind == "input_error_abs"

    @pytest.mark.parametrize(
        "text",
        [
            "horizon: 0",
            "runs: 1",
            "epsilon: 1.5",
            "radius: -2",
            "x0: [1, 2, 3]",
            "sampler: cauchy",
            "bogus: 1",
            "trigger: cor7",
            "seed: abc",
            "system: {A: [[1]]}",
            "[unclosed",
        ],
    )
    def test_invalid(self, text):
        with pytest.raises(InvalidInputError):
            parse_config(text)

    def test_unstable_system_rejected(self):
        text = dump_config(ExperimentConfig()).replace("[-0.7, -0.2]", "[0.0, 0.0]")
        with pytest.raises(InvalidInputError):
            parse_config(text)

    def test_config_file(self, tmp_path, capsys):
        path = tmp_path / "exp.yaml"
        path.write_text(dump_config(preset("paper-example").with_overrides(radius=10.0, out=str(tmp_path))))
        code, _, _ = _run(capsys, "certify", "--config", str(path))
        assert code == 0
        assert json.loads((tmp_path / "report.json").read_text())["radius"] == 10.0

    def test_invalid_config_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("epsilon: 0\n")
        code, _, err = _run(capsys, "certify", "--config", str(path))
        assert code == 2
        assert json.loads(err)["error"] == "invalid-config"

    def test_io_failure_exit(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code, _, err = _run(capsys, "certify", "--out", str(blocker / "sub"))
        assert code == 4
        assert json.loads(err)["error"] == "io-error"
        code, _, _ = _run(capsys, "certify", "--config", str(tmp_path / "missing.yaml"))
        assert code == 4
