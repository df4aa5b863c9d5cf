# tests/test_cli.py
import json

import numpy as np
import pandas as pd
import pytest

from app.config.settings import settings
from app.core.exceptions import NumericalError
from app.main import build_parser, run
from app.services.scenario_runner import ScenarioRunner

SPECTRUM = {
    "name": "laplacian",
    "task": "spectrum",
    "seed": 7,
    "operator": {"grid": {"n": 130, "ymin": 0.0, "ymax": 1.0}, "b": 1.0, "b0": 1.0},
}

ODE = {
    "name": "ode",
    "task": "ode_sweep",
    "operator": {"grid": {"n": 32}},
    "bundle_x": {"x": {"n": 201}, "g": 1.0},
    "parameters": {"lambdas": [7.38905609893065, 20.085536923187668], "radius": 0.5},
}


def write_scenario(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload) if isinstance(payload, dict) else payload)
    return str(path)


def invoke(tmp_path, command, payload, *extra, out="out"):
    out_dir = tmp_path / out
    code = run([command, "--scenario", write_scenario(tmp_path, payload), "--out", str(out_dir), *extra])
    return code, out_dir


class TestSpectrumCommand:
    def test_eigenvalues_match_the_fourier_symbol(self, tmp_path):
        code, out_dir = invoke(tmp_path, "spectrum", SPECTRUM)
        assert code == 0
        table = pd.read_csv(out_dir / "spectrum.csv")
        h = 1.0 / 129.0
        k = np.arange(1, 129)
        expected = 4.0 / h**2 * np.sin(k * np.pi * h / 2.0) ** 2 + 1.0
        np.testing.assert_allclose(table["lambda"].to_numpy(), expected, rtol=1e-10)

    def test_report_envelope(self, tmp_path):
        _, out_dir = invoke(tmp_path, "spectrum", SPECTRUM)
        report = json.loads((out_dir / "spectrum.json").read_text())
        assert {"scenario", "scenario_sha256", "version", "seed", "task", "tolerances", "result"} <= set(report)
        assert report["seed"] == 7
        assert len(report["scenario_sha256"]) == 64
        assert report["result"]["n"] == 128
        assert report["result"]["max_residual"] <= settings.EIG_RESIDUAL_TOL * report["result"]["lambda_max"]

    def test_reruns_are_byte_identical(self, tmp_path):
        _, first = invoke(tmp_path, "spectrum", SPECTRUM, out="first")
        _, second = invoke(tmp_path, "spectrum", SPECTRUM, out="second")
        for name in ("spectrum.csv", "spectrum.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_seed_override(self, tmp_path):
        _, out_dir = invoke(tmp_path, "spectrum", SPECTRUM, "--seed", "99")
        assert json.loads((out_dir / "spectrum.json").read_text())["seed"] == 99


class TestFailures:
    def test_empty_scenario(self, tmp_path):
        code, out_dir = invoke(tmp_path, "spectrum", "")
        assert code == 2
        error = json.loads((out_dir / "error.json").read_text())
        assert error["error"] == "ScenarioError"
        assert error["exit_code"] == 2

    def test_grid_too_small(self, tmp_path):
        payload = {**SPECTRUM, "operator": {"grid": {"n": 4}}}
        code, out_dir = invoke(tmp_path, "spectrum", payload)
        assert code == 2
        assert json.loads((out_dir / "error.json").read_text())["details"]["errors"]

    def test_missing_bundle(self, tmp_path):
        payload = {key: value for key, value in ODE.items() if key != "bundle_x"}
        code, _ = invoke(tmp_path, "ode", payload)
        assert code == 2

    def test_numerical_failure(self, tmp_path, monkeypatch):
        def broken(self):
            raise NumericalError("eigensolver failed")

        monkeypatch.setattr(ScenarioRunner, "spectrum", broken)
        code, out_dir = invoke(tmp_path, "spectrum", SPECTRUM)
        assert code == 3
        assert json.loads((out_dir / "error.json").read_text())["message"] == "eigensolver failed"

    def test_failed_certificate_keeps_the_table(self, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "INEQUALITY_SLACK", -0.5)
        code, out_dir = invoke(tmp_path, "ode", ODE)
        assert code == 4
        table = pd.read_csv(out_dir / "ode_sweep.csv")
        assert not table["certified"].any()
        assert (out_dir / "error.json").exists()

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["explode", "--scenario", "x.json"])


class TestOtherCommands:
    def test_ode_sweep(self, tmp_path):
        code, out_dir = invoke(tmp_path, "ode", ODE)
        assert code == 0
        report = json.loads((out_dir / "ode_sweep.json").read_text())
        assert all(row["certified"] for row in report["result"]["rows"])
        assert "scaling" in report["result"]

    def test_estimate_resolves_the_scenario_task(self, tmp_path):
        payload = {
            "name": "small",
            "task": "subelliptic",
            "operator": {"grid": {"n": 64}},
            "parameters": {"delta": 0.5, "family": {"count": 4}},
        }
        code, out_dir = invoke(tmp_path, "estimate", payload)
        assert code == 0
        report = json.loads((out_dir / "subelliptic.json").read_text())
        assert report["result"]["verdict"] in {"consistent", "inconclusive", "violation_trend"}

    def test_interp(self, tmp_path):
        payload = {
            "name": "interp",
            "task": "interpolate",
            "operator": {"grid": {"n": 64}},
            "parameters": {"epsilons": [0.5, 0.1], "sequence_count": 3},
        }
        code, out_dir = invoke(tmp_path, "interp", payload)
        assert code == 0
        table = pd.read_csv(out_dir / "interpolation.csv")
        assert len(table) == 3 * 2 * 3
        assert (table["lhs"] <= table["rhs"]).all()

    def test_solve_reports_the_sobolev_measurements(self, tmp_path):
        payload = {
            "name": "solve",
            "task": "build_solution",
            "operator": {"grid": {"n": 34, "ymin": 0.0, "ymax": 1.0}},
            "bundle_x": {"x": {"n": 201}, "g": 1.0},
            "parameters": {"epsilon": 0.5, "bands": [4]},
        }
        code, out_dir = invoke(tmp_path, "solve", payload)
        assert code == 0
        result = json.loads((out_dir / "solution.json").read_text())["result"]
        assert result["radius"] == pytest.approx(0.25)
        assert len(result["closed_graph"]["rows"]) == 4
        assert result["mixed_norm"]["holds"]
        assert result["sobolev_multiplier_sup"] == pytest.approx(1.0)
        assert result["band_growth"]["holds"]
        assert (out_dir / "solution_w.csv").exists()

    def test_assemble_with_a_random_u(self, tmp_path):
        payload = {
            "name": "assemble",
            "task": "assemble",
            "operator": {"grid": {"n": 64}},
            "parameters": {"epsilons": [0.5, 0.1], "u": {"kind": "random"}},
        }
        code, out_dir = invoke(tmp_path, "assemble", payload)
        assert code == 0
        result = json.loads((out_dir / "assembly.json").read_text())["result"]
        assert len(result["reports"]) == 2
        assert all(report["bound_holds"] for report in result["reports"])
