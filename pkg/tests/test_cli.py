"""Config schema, validation diagnostics, artifacts, determinism."""

import configparser
import json
from pathlib import Path

import pytest

from vslqsim import cli


def write_config(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    return str(path)


BASE = """
[run]
experiment = measure
out_dir = {out}
master_seed = 7

[vslq]
t1p_us = 8.0

[integrator]
dt_ns = 0.1

[measure]
duration_ns = 80.0
ramp_ns = 15.0
"""


class TestConfigSchema:
    def test_defaults_fill_in(self, tmp_path):
        cfg = cli.load_config(write_config(tmp_path / "c.ini", "[run]\n"))
        assert cfg["vslq"]["w_mhz"] == 25.0
        assert cfg["bench"]["t1p_grid_us"] == (8.0, 16.0, 32.0, 64.0)

    def test_unknown_key_rejected(self, tmp_path):
        p = write_config(tmp_path / "c.ini", "[vslq]\nw_mgz = 25\n")
        with pytest.raises(cli.ConfigError, match="vslq.w_mgz"):
            cli.load_config(p)

    def test_unknown_section_rejected(self, tmp_path):
        p = write_config(tmp_path / "c.ini", "[vslqq]\nw_mhz = 25\n")
        with pytest.raises(cli.ConfigError, match="vslqq"):
            cli.load_config(p)

    def test_bad_value_diagnostic(self, tmp_path):
        p = write_config(tmp_path / "c.ini", "[vslq]\nt1p_us = sixty-four\n")
        with pytest.raises(cli.ConfigError, match="vslq.t1p_us"):
            cli.load_config(p)

    def test_overrides(self, tmp_path):
        p = write_config(tmp_path / "c.ini", "[run]\n")
        cfg = cli.load_config(p, overrides=["vslq.t1p_us=16", "bench.gate=XCX"])
        assert cfg["vslq"]["t1p_us"] == 16.0
        assert cfg["bench"]["gate"] == "XCX"

    def test_malformed_override(self, tmp_path):
        p = write_config(tmp_path / "c.ini", "[run]\n")
        with pytest.raises(cli.ConfigError):
            cli.load_config(p, overrides=["t1p=16"])


class TestValidate:
    def test_default_config_clean(self, tmp_path):
        cfg = cli.load_config(write_config(tmp_path / "c.ini", "[run]\n"))
        assert [d for d in cli.validate(cfg) if d[0] == "error"] == []

    def test_negative_t1p_is_error(self, tmp_path):
        cfg = cli.load_config(write_config(tmp_path / "c.ini",
                                           "[vslq]\nt1p_us = -2\n"))
        assert any("t1p_us" in m for lvl, m in cli.validate(cfg) if lvl == "error")

    def test_coarse_dt_warns(self, tmp_path):
        cfg = cli.load_config(write_config(tmp_path / "c.ini",
                                           "[integrator]\ndt_ns = 1.0\n"))
        diags = cli.validate(cfg)
        assert any("dt" in m for _, m in diags)

    def test_validate_command_exit_codes(self, tmp_path, capsys):
        good = write_config(tmp_path / "good.ini", "[run]\n")
        assert cli.main(["validate", good]) == 0
        bad = write_config(tmp_path / "bad.ini", "[vslq]\nt1p_us = -1\n")
        assert cli.main(["validate", bad]) == 2
        missing_key = write_config(tmp_path / "ugly.ini", "[vslq]\nbogus = 1\n")
        assert cli.main(["validate", missing_key]) == 2


class TestRun:
    def test_measure_run_writes_artifacts(self, tmp_path):
        out = tmp_path / "out"
        p = write_config(tmp_path / "c.ini", BASE.format(out=out))
        assert cli.main(["run", p]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["experiment"] == "measure"
        assert 0.3 < report["report"]["ratio"] < 0.7
        assert (out / "pointer.csv").exists()
        echo = configparser.ConfigParser()
        echo.read(out / "config_echo.ini")
        assert echo["vslq"]["t1p_us"] == "8.0"

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        p1 = write_config(tmp_path / "c1.ini", BASE.format(out=out1))
        p2 = write_config(tmp_path / "c2.ini", BASE.format(out=out1))
        assert cli.main(["run", p1]) == 0
        blob1 = (out1 / "report.json").read_bytes()
        csv1 = (out1 / "pointer.csv").read_bytes()
        assert cli.main(["run", p2, "--out", str(out2)]) == 0
        assert (out2 / "report.json").read_bytes() == blob1
        assert (out2 / "pointer.csv").read_bytes() == csv1

    def test_config_error_exit_code(self, tmp_path):
        p = write_config(tmp_path / "c.ini", "[vslq]\nt1p_us = -4\n")
        assert cli.main(["run", p]) == 2

    def test_numerical_failure_exit_code(self, tmp_path):
        # unstable step size trips the integrator, exit 3 with a report
        out = tmp_path / "o"
        text = BASE.format(out=out) + "\n"
        p = write_config(tmp_path / "c.ini",
                         text.replace("dt_ns = 0.1", "dt_ns = 0.45"))
        assert cli.main(["run", p]) == 3
        assert (out / "failure.json").exists()

    def test_csv_round_trip(self, tmp_path):
        out = tmp_path / "out"
        p = write_config(tmp_path / "c.ini", BASE.format(out=out))
        cli.main(["run", p])
        lines = (out / "pointer.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[0] == "t_ns"
        for row in lines[1:3]:
            vals = row.split(",")
            assert len(vals) == len(header)
            float(vals[0])


class TestCalibrateExperiment:
    def test_calibrate_writes_cache(self, tmp_path):
        out = tmp_path / "out"
        cal = tmp_path / "cal.json"
        text = f"""
[run]
experiment = calibrate
out_dir = {out}

[vslq]
t1p_us = 8.0

[bench]
gate = idle

[pulse]
calibration_file = {cal}
"""
        p = write_config(tmp_path / "c.ini", text)
        assert cli.main(["run", p]) == 0
        payload = json.loads(cal.read_text())
        assert payload["recovery_fidelity"] > 0.9
        assert payload["ec_amplitude_mhz"] > 0.0
