"""Command line round trips: run, compare and gains subcommands."""

import numpy as np
import pytest
import yaml

from locomanip.cli import main

K_FB_REF = (4715.60195026, 2705.42004837, 391.51776754)

MINI = {
    "name": "mini",
    "duration_s": 2.0,
    "dt_s": 0.005,
    "hands": [
        {
            "time_s": 0.0,
            "mode": "linear",
            "contacts": [{"position_m": [0.3, 0.0, 0.4]}],
        },
        {
            "time_s": 0.8,
            "mode": "hold",
            "contacts": [{"position_m": [0.3, 0.0, 0.4], "force_n": [-30.0, 0.0, 0.0]}],
        },
    ],
    "checks": [{"name": "completed", "metric": "diverged", "max": 0.0}],
}


@pytest.fixture
def mini_path(tmp_path):
    p = tmp_path / "mini.yaml"
    p.write_text(yaml.safe_dump(MINI))
    return p


def run_cli(*argv):
    return main(list(argv))


class TestRun:
    def test_bundled_scenario(self, tmp_path, capsys):
        code = run_cli("run", "--config", "nominal", "--out", str(tmp_path / "o"))
        out = capsys.readouterr().out
        assert code == 0
        assert "scenario nominal: completed" in out
        assert "check.completed=PASS" in out
        assert (tmp_path / "o" / "trace.csv").is_file()
        assert (tmp_path / "o" / "metrics.txt").is_file()

    def test_config_file_with_overrides(self, mini_path, tmp_path, capsys):
        code = run_cli(
            "run",
            "--config", str(mini_path),
            "--out", str(tmp_path / "o"),
            "--override", "duration_s=1.0",
            "--override", "controller.k_p=1.5",
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "completed 1.000 s" in out

    def test_unknown_field_exits_one(self, mini_path, tmp_path, capsys):
        code = run_cli(
            "run",
            "--config", str(mini_path),
            "--out", str(tmp_path / "o"),
            "--override", "controller.kp=2.0",
        )
        err = capsys.readouterr().err
        assert code == 1
        assert "config error" in err and "controller.kp" in err

    def test_missing_config_exits_one(self, tmp_path, capsys):
        code = run_cli("run", "--config", str(tmp_path / "absent.yaml"))
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_bad_override_exits_one(self, mini_path, capsys):
        code = run_cli("run", "--config", str(mini_path), "--override", "nonsense")
        assert code == 1
        assert "must look like" in capsys.readouterr().err

    def test_divergence_exits_two(self, mini_path, tmp_path, capsys):
        code = run_cli(
            "run",
            "--config", str(mini_path),
            "--out", str(tmp_path / "o"),
            "--override", "plant.divergence_limit_m=0.02",
            "--override",
            'disturbances=[{kind: step, axis: x, amplitude_n: -400.0, start_s: 0.5}]',
        )
        out = capsys.readouterr().out
        assert code == 2
        assert "DIVERGED" in out


class TestCompare:
    @pytest.fixture
    def two_traces(self, mini_path, tmp_path):
        for sub in ("a", "b"):
            assert run_cli(
                "run", "--config", str(mini_path), "--out", str(tmp_path / sub)
            ) == 0
        return tmp_path / "a" / "trace.csv", tmp_path / "b" / "trace.csv"

    def test_identical_runs(self, two_traces, capsys):
        a, b = two_traces
        code = run_cli("compare", str(a), str(b))
        out = capsys.readouterr().out
        assert code == 0
        lines = [l for l in out.splitlines() if l]
        assert lines and all("ratio=1 " in l and "larger=equal" in l for l in lines)

    def test_metric_filter(self, two_traces, capsys):
        a, b = two_traces
        code = run_cli(
            "compare", str(a), str(b),
            "--metric", "rms_zmp_dev_x", "--metric", "max_dcm_err_y",
        )
        out = capsys.readouterr().out
        assert code == 0
        lines = [l for l in out.splitlines() if l]
        assert len(lines) == 2
        assert lines[0].startswith("metric=rms_zmp_dev_x ")
        assert lines[1].startswith("metric=max_dcm_err_y ")

    def test_schema_mismatch_exits_one(self, two_traces, tmp_path, capsys):
        a, b = two_traces
        text = b.read_text().splitlines()
        text[0] = text[0].replace("fext_sum_z", "fext_sum_w")
        broken = tmp_path / "broken.csv"
        broken.write_text("\n".join(text) + "\n")
        code = run_cli("compare", str(a), str(broken))
        assert code == 1
        assert "schema mismatch" in capsys.readouterr().err


class TestGains:
    def test_reports_reference_gains(self, capsys):
        code = run_cli("gains", "--config", "testcase1")
        out = capsys.readouterr().out
        assert code == 0
        fields = dict(
            line.split("=", 1) for line in out.splitlines() if "=" in line
        )
        assert fields["scenario"] == "testcase1"
        assert int(fields["n_preview"]) == 800
        k_fb = [float(v) for v in fields["k_fb"].split(",")]
        assert np.allclose(k_fb, K_FB_REF, rtol=1e-6)
        # discrete preview loop is strictly stable
        assert float(fields["preview_pole_abs"].split(",")[0]) < 1.0
        assert float(fields["stabilizer_pole_max_real"]) < 0.0

    def test_gains_respect_overrides(self, capsys):
        code = run_cli(
            "gains", "--config", "nominal", "--override", "dt_s=0.005",
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "n_preview=320" in out
