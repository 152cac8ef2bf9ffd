import json
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from explicit_dno.cli import EXIT_CODES, main
from explicit_dno.config import ConfigError, apply_env_overrides, config_from_dict, load_config
from explicit_dno.spectral import Grid, ScalarField, read_fld1, write_fld1

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ERROR_LINE = re.compile(r"^error (E_[A-Z]+): \S.*$")


def run(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def report(out: Path) -> dict:
    return json.loads((out / "report.json").read_text())


def write_config(path: Path, text: str) -> Path:
    path.write_text("schema = 1\n" + text)
    return path


def assert_error(err: str, code: str):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    m = ERROR_LINE.match(lines[0])
    assert m and m.group(1) == code


class TestShippedConfigs:
    def test_linear(self, tmp_path, capsys):
        code, _, _ = run(["apply", "--config", str(CONFIGS / "linear.toml"), "--out", str(tmp_path)], capsys)
        assert code == 0
        rep = report(tmp_path)
        assert rep["reference"] == "linear" and rep["dispersion_error"] < 1e-12
        g = read_fld1(tmp_path / "G.fld")
        assert g.grid.sizes == (256,)

    def test_flat_harmonic(self, tmp_path, capsys):
        assert run(["apply", "--config", str(CONFIGS / "flat_harmonic.toml"), "--out", str(tmp_path)], capsys)[0] == 0
        rep = report(tmp_path)
        assert rep["reference"] == "analytic" and rep["error_rel_linf"] < 1e-8

    def test_varying_bottom(self, tmp_path, capsys):
        assert run(["apply", "--config", str(CONFIGS / "varying_bottom.toml"), "--out", str(tmp_path)], capsys)[0] == 0
        rep = report(tmp_path)
        assert rep["reference"] == "oracle" and rep["error_rel_linf"] < 1e-3
        assert (tmp_path / "psi.fld").exists()

    def test_wavemaker(self, tmp_path, capsys):
        assert run(["moving", "--config", str(CONFIGS / "wavemaker.toml"), "--out", str(tmp_path)], capsys)[0] == 0
        props = {p["property"]: p for p in report(tmp_path)["properties"]}
        assert props["wavemaker_response"]["value"] < 1e-10
        assert props["static_reduction"]["passed"] and props["volume_budget"]["passed"]

    @pytest.mark.parametrize("name, ratio, rel", [("converge_cs", 8.0, 0.2), ("converge_shallow", 16.0, 0.25)])
    def test_slope_sweeps(self, tmp_path, capsys, name, ratio, rel):
        assert run(["converge", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(tmp_path)], capsys)[0] == 0
        for s in report(tmp_path)["slopes"]:
            assert s["ratio"] == pytest.approx(ratio, rel=rel)
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "parameter,error,iterations,time" and len(lines) == 4

    def test_terms_sweep_plateau(self, tmp_path, capsys):
        assert run(["converge", "--config", str(CONFIGS / "converge_terms.toml"), "--out", str(tmp_path)], capsys)[0] == 0
        errs = [p["error"] for p in report(tmp_path)["points"]]
        assert errs[0] > 1e-6
        assert max(errs[2:]) < 1e-11

    def test_validate_default_suite(self, tmp_path, capsys):
        t0 = time.perf_counter()
        code, out, _ = run(["validate", "--config", str(CONFIGS / "validate.toml"), "--out", str(tmp_path)], capsys)
        elapsed = time.perf_counter() - t0
        assert code == 0 and "passed" in out
        rep = report(tmp_path)
        assert rep["grid"] == [256] and all(p["passed"] for p in rep["properties"])
        names = {p["property"] for p in rep["properties"]}
        assert {"self_adjoint", "zero_mean_output", "static_reduction", "volume_budget", "appendix_cosh_addition"} <= names
        assert elapsed < 60.0

    def test_vanishing_depth_rejected(self, tmp_path, capsys):
        code, _, err = run(["apply", "--config", str(CONFIGS / "vanishing_depth.toml"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_CODES["E_DEPTH"]
        assert_error(err, "E_DEPTH")
        assert "floor" in err


class TestDeterminism:
    def test_apply_report_bytes(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", '[grid]\nn = 64\n[bathymetry]\nshape = "cosine_bump"\namplitude = 0.1\n'
                           '[surface]\nshape = "cosine"\namplitude = 0.05\n[potential]\nshape = "random"\n'
                           '[experiment]\nreference = "none"\n')
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        for out, seed in ((a, "11"), (b, "11"), (c, "12")):
            assert run(["apply", "--config", str(cfg), "--out", str(out), "--seed", seed], capsys)[0] == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "G.fld").read_bytes() == (b / "G.fld").read_bytes()
        assert (a / "G.fld").read_bytes() != (c / "G.fld").read_bytes()

    def test_validate_report_bytes(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("EXPLICIT_DNO_GRID__N", "32")
        monkeypatch.setenv("EXPLICIT_DNO_VALIDATE__DRAWS", "2")
        a, b = tmp_path / "a", tmp_path / "b"
        for out, workers in ((a, "1"), (b, "2")):
            args = ["validate", "--config", str(CONFIGS / "validate.toml"), "--out", str(out), "--seed", "5", "--workers", workers]
            assert run(args, capsys)[0] == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert report(a)["grid"] == [32] and report(a)["draws"] == 2


class TestErrors:
    def test_missing_config(self, tmp_path, capsys):
        code, _, err = run(["apply", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_CODES["E_CONFIG"] == 2
        assert_error(err, "E_CONFIG")

    @pytest.mark.parametrize("text", [
        "[grid]\nn = 7\n",
        '[bathymetry]\nshape = "volcano"\n',
        "[operator]\nmax_terms = 0\n",
        "[operator]\nfoo = 1\n",
        "[bogus]\nx = 1\n",
        '[bathymetry]\nshape = "constant"\ndepth = -1.0\n',
        '[bathymetry]\nshape = "file"\npath = "missing.fld"\n',
        '[experiment]\nmethod = "magic"\n',
    ])
    def test_config_errors(self, tmp_path, capsys, text):
        cfg = write_config(tmp_path / "c.toml", text)
        code, _, err = run(["apply", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_CODES["E_CONFIG"]
        assert_error(err, "E_CONFIG")

    def test_schema_required(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[grid]\nn = 64\n")
        code, _, err = run(["apply", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 2 and "schema" in err

    def test_unparseable_toml(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("schema = = 1\n")
        assert run(["apply", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 2

    def test_io_error(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, err = run(["apply", "--config", str(CONFIGS / "linear.toml"), "--out", str(blocker / "sub")], capsys)
        assert code == EXIT_CODES["E_IO"] == 3
        assert_error(err, "E_IO")

    def test_nonzero_mean_rate_is_gauge_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", '[grid]\nn = 32\n[moving]\nrate_shape = "constant"\nrate_amplitude = 0.1\n')
        code, _, err = run(["moving", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_CODES["E_GAUGE"] == 4
        assert_error(err, "E_GAUGE")

    def test_solver_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.toml", '[grid]\nn = 64\n[bathymetry]\nshape = "cosine_bump"\namplitude = 0.3\n'
                           '[surface]\nshape = "cosine"\namplitude = 0.2\n[experiment]\nreference = "none"\n'
                           "[operator]\nsolver_max_iters = 2\nrestart = 2\n")
        code, _, err = run(["apply", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_CODES["E_SOLVER"] == 6
        assert_error(err, "E_SOLVER")

    def test_oracle_error(self, tmp_path, capsys, monkeypatch):
        import explicit_dno.harness as harness
        from explicit_dno.oracle import OracleError

        def broken(*args, **kwargs):
            raise OracleError("residual 1e-3 above 1e-10")

        monkeypatch.setattr(harness, "fd_dno", broken)
        code, _, err = run(["apply", "--config", str(CONFIGS / "varying_bottom.toml"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_CODES["E_ORACLE"] == 7
        assert_error(err, "E_ORACLE")

    def test_failed_property(self, tmp_path, capsys, monkeypatch):
        # a loose series tail leaves the identity residuals far above 1e-10
        monkeypatch.setenv("EXPLICIT_DNO_GRID__N", "32")
        monkeypatch.setenv("EXPLICIT_DNO_VALIDATE__DRAWS", "1")
        monkeypatch.setenv("EXPLICIT_DNO_OPERATOR__TERM_TOL", "1e-4")
        code, _, err = run(["validate", "--config", str(CONFIGS / "validate.toml"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_CODES["E_FAILED"] == 8
        assert_error(err, "E_FAILED")
        assert report(tmp_path)["passed"] is False

    def test_empty_band_is_config_error(self, tmp_path, capsys, monkeypatch):
        # four terms reach |k h| of about 0.07: no mode of the grid survives
        monkeypatch.setenv("EXPLICIT_DNO_OPERATOR__MAX_TERMS", "4")
        code, _, err = run(["apply", "--config", str(CONFIGS / "varying_bottom.toml"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_CODES["E_CONFIG"]
        assert_error(err, "E_CONFIG")
        assert "max_terms" in err

    def test_internal_error(self, tmp_path, capsys, monkeypatch):
        import explicit_dno.harness as harness

        def broken(*args, **kwargs):
            raise ZeroDivisionError("boom\nsecond line")

        monkeypatch.setitem(harness.COMMANDS, "apply", broken)
        code, _, err = run(["apply", "--config", str(CONFIGS / "linear.toml"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_CODES["E_INTERNAL"] == 1
        assert_error(err, "E_INTERNAL")

    def test_bad_seed_and_workers(self, tmp_path, capsys):
        for extra in (["--seed", "-1"], ["--workers", "0"]):
            code, _, err = run(["apply", "--config", str(CONFIGS / "linear.toml"), "--out", str(tmp_path)] + extra, capsys)
            assert code == 2
            assert_error(err, "E_CONFIG")

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "explicit_dno", "apply", "--config", str(CONFIGS / "vanishing_depth.toml"), "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 5
        assert_error(proc.stderr, "E_DEPTH")


class TestConfig:
    def test_env_override_parses_toml_values(self):
        data = apply_env_overrides({"schema": 1, "grid": {"n": 64}}, {"EXPLICIT_DNO_GRID__N": "128", "EXPLICIT_DNO_OPERATOR__MAX_TERMS": "32", "OTHER": "x"})
        assert data["grid"]["n"] == 128 and data["operator"]["max_terms"] == 32

    def test_env_override_does_not_mutate(self):
        data = {"schema": 1, "grid": {"n": 64}}
        apply_env_overrides(data, {"EXPLICIT_DNO_GRID__N": "128"})
        assert data["grid"]["n"] == 64

    def test_env_override_unknown_section(self):
        with pytest.raises(ConfigError):
            apply_env_overrides({"schema": 1}, {"EXPLICIT_DNO_NOPE__X": "1"})

    def test_env_override_string_value(self):
        cfg = config_from_dict({"schema": 1}, environ={"EXPLICIT_DNO_BATHYMETRY__SHAPE": "constant"})
        assert cfg.section("bathymetry")["shape"] == "constant"

    def test_operator_section(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.toml", "[operator]\nmax_terms = 16\nrefine = 0\n"), environ={})
        assert cfg.operator.max_terms == 16 and cfg.operator.refine == 0

    def test_file_generators(self, tmp_path, capsys):
        grid = Grid.periodic(64)
        (x,) = grid.coordinates()
        write_fld1(tmp_path / "d.fld", ScalarField(grid, 1 + 0.1 * np.cos(x)))
        write_fld1(tmp_path / "phi.fld", ScalarField(grid, np.cos(x)))
        cfg = write_config(tmp_path / "c.toml", '[grid]\nn = 64\n[bathymetry]\nshape = "file"\npath = "d.fld"\n'
                           '[potential]\nshape = "file"\npath = "phi.fld"\n[experiment]\nreference = "none"\n')
        assert run(["apply", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)[0] == 0

    def test_file_grid_mismatch(self, tmp_path, capsys):
        write_fld1(tmp_path / "d.fld", ScalarField.constant(Grid.periodic(32), 1.0))
        cfg = write_config(tmp_path / "c.toml", '[grid]\nn = 64\n[bathymetry]\nshape = "file"\npath = "d.fld"\n')
        assert run(["apply", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)[0] == 2
