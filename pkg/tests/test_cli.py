"""Config validation, the run/verify/sweep commands, and artifact contracts."""

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from metacont.cli import (
    ConfigError,
    RunConfig,
    config_content_hash,
    main,
    run,
    sweep,
    verify,
)
from metacont.fields import read_snapshot_vector

TWO_PI = 2 * np.pi


def shear_config(out_dir, t_end=1.0, amplitude=1e-3, kappa=0.0, dt=0.02,
                 snapshot_every=0, report_every=20):
    return {
        "grid": {"dims": [64, 64, 1]},
        "params": {"mu": 1.0, "eta": 1.0, "kappa": kappa},
        "system": "fi_incompressible",
        "scenario": {"kind": "standing_shear_wave", "amplitude": amplitude,
                     "wavevector": [1, 0, 0], "polarization": [0, 1, 0]},
        "control": {"t_end": t_end, "dt": dt},
        "outputs": {"snapshot_every": snapshot_every,
                    "report_every": report_every, "out_dir": str(out_dir)},
    }


class TestConfigValidation:
    def test_minimal_config_parses(self, tmp_path):
        cfg = RunConfig.from_dict(shear_config(tmp_path / "o"))
        assert cfg.system == "fi_incompressible"
        assert cfg.grid.dims == (64, 64, 1)

    def test_missing_polarization_rejected(self, tmp_path):
        doc = shear_config(tmp_path / "o")
        del doc["scenario"]["polarization"]
        with pytest.raises(ConfigError):
            RunConfig.from_dict(doc)

    def test_incompatible_scenario_system(self, tmp_path):
        doc = shear_config(tmp_path / "o")
        doc["scenario"] = {"kind": "compression_pulse", "amplitude": 1e-3,
                           "wavevector": [1, 0, 0]}
        with pytest.raises(ConfigError, match="incompatible"):
            RunConfig.from_dict(doc)

    def test_unknown_system_rejected(self, tmp_path):
        doc = shear_config(tmp_path / "o")
        doc["system"] = "navier_stokes"
        with pytest.raises(ConfigError):
            RunConfig.from_dict(doc)

    def test_unknown_top_level_key_rejected(self, tmp_path):
        doc = shear_config(tmp_path / "o")
        doc["integrator"] = "rk4"
        with pytest.raises(ConfigError):
            RunConfig.from_dict(doc)

    def test_content_hash_is_canonical(self, tmp_path):
        a = shear_config(tmp_path / "o")
        b = json.loads(json.dumps(a))
        assert config_content_hash(a) == config_content_hash(b)
        b["params"]["kappa"] = 0.1
        assert config_content_hash(a) != config_content_hash(b)


class TestRun:
    def test_zero_amplitude_all_residuals_zero(self, tmp_path):
        doc = shear_config(tmp_path / "out", amplitude=0.0, t_end=0.2)
        summary, _ = run(RunConfig.from_dict(doc))
        for value in summary["law_residual_max_normalized_linf"].values():
            assert value == 0.0

    def test_artifacts_and_manifest_checksums(self, tmp_path):
        out = tmp_path / "out"
        doc = shear_config(out, t_end=0.5, snapshot_every=10, report_every=10)
        run(RunConfig.from_dict(doc))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config_hash"] == config_content_hash(doc)
        assert manifest["artifacts"]
        for rel, digest in manifest["artifacts"].items():
            blob = (out / rel).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == digest, rel
        # both candidate induction weights are reported
        assert manifest["params"]["b_weight_mu"] == 1.0
        assert manifest["params"]["b_weight_eta_c2"] == 1.0

    def test_snapshots_round_trip(self, tmp_path):
        out = tmp_path / "out"
        doc = shear_config(out, t_end=0.2, snapshot_every=5)
        run(RunConfig.from_dict(doc))
        v, meta = read_snapshot_vector(out / "snapshots" / "step_00000000", "v")
        assert meta["time"] == 0.0
        x = np.linspace(0, TWO_PI, 64, endpoint=False)
        np.testing.assert_allclose(
            v.y.values[:, 0, 0], 1e-3 * np.sin(x), atol=1e-15)

    def test_shear_run_measures_wave_speed(self, tmp_path):
        doc = shear_config(tmp_path / "out", t_end=2.0)
        summary, _ = run(RunConfig.from_dict(doc))
        m = summary["measurement"]
        assert m["valid"]
        assert m["phase_speed_rel_error"] < 0.005

    def test_reports_stream_written(self, tmp_path):
        out = tmp_path / "out"
        doc = shear_config(out, t_end=0.5, report_every=5)
        run(RunConfig.from_dict(doc))
        lines = (out / "reports.ndjson").read_text().strip().split("\n")
        assert len(lines) >= 5
        sample = json.loads(lines[0])
        assert "faraday_lorentz" in sample["laws"]
        csv_lines = (out / "reports.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "time,law,l2,linf,norm"

    def test_byte_identical_reruns(self, tmp_path):
        doc_a = shear_config(tmp_path / "a", t_end=0.4, snapshot_every=10,
                             report_every=10)
        doc_b = json.loads(json.dumps(doc_a))
        doc_b["outputs"]["out_dir"] = str(tmp_path / "b")
        run(RunConfig.from_dict(doc_a))
        run(RunConfig.from_dict(doc_b))
        files_a = sorted(p.relative_to(tmp_path / "a")
                         for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b")
                         for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            if rel.name == "manifest.json":
                # manifests embed out_dir in the config echo; compare the rest
                a = json.loads((tmp_path / "a" / rel).read_text())
                b = json.loads((tmp_path / "b" / rel).read_text())
                assert a["artifacts"] == b["artifacts"]
            else:
                assert (tmp_path / "a" / rel).read_bytes() == \
                    (tmp_path / "b" / rel).read_bytes(), rel

    def test_second_order_system_runs(self, tmp_path):
        doc = shear_config(tmp_path / "out", t_end=0.2)
        doc["system"] = "second_order"
        summary, final = run(RunConfig.from_dict(doc))
        assert summary["final_time"] == pytest.approx(0.2)
        assert "v_t" in summary["norms"]

    def test_compression_pulse_under_linear_navier(self, tmp_path):
        doc = {
            "grid": {"dims": [64, 64, 1]},
            "params": {"mu": 1.0, "eta": 1.0, "lam": 98.0},
            "system": "linear_navier",
            "scenario": {"kind": "compression_pulse", "amplitude": 1e-3,
                         "wavevector": [1, 0, 0]},
            "control": {"t_end": 2.0, "dt": "auto", "cfl": 0.4},
            "outputs": {"out_dir": str(tmp_path / "out")},
        }
        summary, _ = run(RunConfig.from_dict(doc))
        m = summary["measurement"]
        assert m["valid"]
        assert abs(m["measured_phase_speed"] - 10.0) / 10.0 < 0.01
        # no stress vector state: no law reports for this system
        assert summary["law_residual_max_normalized_linf"] == {}


class TestVerify:
    def test_subset_checks_pass_quickly(self, capsys):
        code, results = verify(level="quick")
        assert code == 0
        assert all(r["pass"] for r in results)
        out = capsys.readouterr().out
        assert "PASS verify[quick]" in out

    def test_tamper_fails_named_check(self, capsys):
        code, results = verify(level="quick", tamper="vector_identity_triple_64x64")
        assert code == 1
        by_name = {r["check"]: r for r in results}
        assert not by_name["vector_identity_triple_64x64"]["pass"]
        others = [r for r in results
                  if r["check"] != "vector_identity_triple_64x64"]
        assert all(r["pass"] for r in others)


class TestSweep:
    def test_empty_values_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            sweep(shear_config(tmp_path / "o"), "amplitude", [], tmp_path / "s")

    def test_unknown_axis_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            sweep(shear_config(tmp_path / "o"), "viscosity", [1.0], tmp_path / "s")

    def test_failure_recorded_and_sweep_continues(self, tmp_path):
        doc = shear_config(tmp_path / "o", t_end=0.2)
        # negative conductivity violates the parameter invariants: run fails,
        # the sweep records it and continues
        summary = sweep(doc, "kappa", [0.1, -0.5], tmp_path / "s")
        statuses = [r["status"] for r in summary["rows"]]
        assert statuses == ["ok", "failed"]
        assert summary["partial"]
        csv_text = (tmp_path / "s" / "sweep.csv").read_text()
        assert "failed" in csv_text

    def test_kappa_axis_records_decay(self, tmp_path):
        doc = shear_config(tmp_path / "o", t_end=2.0)
        summary = sweep(doc, "kappa", [0.1, 0.2], tmp_path / "s")
        assert not summary["partial"]
        rows = summary["rows"]
        # telegraph damping: measured decay rate tracks kappa/2
        assert rows[0]["decay_rate"] == pytest.approx(0.05, rel=0.05)
        assert rows[1]["decay_rate"] == pytest.approx(0.10, rel=0.05)


class TestMainEntryPoint:
    def test_missing_config_exits_2_with_json_error(self, capsys):
        code = main(["run", "--config", "/nonexistent/cfg.json"])
        assert code == 2
        err = capsys.readouterr().err
        payload = json.loads(err.strip())
        assert payload["error"] == "ConfigError"

    def test_run_via_main(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(shear_config(tmp_path / "out", t_end=0.2)))
        code = main(["run", "--config", str(cfg)])
        assert code == 0
        out = capsys.readouterr().out
        assert json.loads(out)["final_time"] == pytest.approx(0.2)

    def test_bad_sweep_values_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(shear_config(tmp_path / "out", t_end=0.2)))
        code = main(["sweep", "--config", str(cfg), "--axis", "amplitude",
                     "--values", "1e-3,banana"])
        assert code == 2

    def test_console_script_installed(self):
        proc = subprocess.run(
            [sys.executable, "-m", "metacont.cli", "--help"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "run" in proc.stdout and "verify" in proc.stdout
