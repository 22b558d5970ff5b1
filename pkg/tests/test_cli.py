"""Tests for the wgqd command-line interface"""

import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from wgqdpy.cli import (
    EXIT_CONFIG,
    EXIT_DOMAIN,
    G2RunConfig,
    build_parser,
    load_run_config,
    main,
)
from wgqdpy.src.budget import chain_total_db, db_to_linear
from wgqdpy.src.helper_functions import file_digest


def run_cli(*argv):
    """Exit code, stdout and stderr of one invocation"""
    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        code = main(list(argv))
    return code, stdout.getvalue(), stderr.getvalue()


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)


@pytest.mark.cli
class TestCli(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_budget_infer(self):
        code, stdout, _ = run_cli("budget", "infer", "--out", str(self.out))
        assert code == 0
        payload = json.loads(stdout)
        assert payload["total_db"] == pytest.approx(16.1)
        assert payload["source_rate"] == pytest.approx(2.249e5, rel=1e-3)
        assert payload["emitter_rate"] == pytest.approx(payload["source_rate"] / 0.47)

        manifest = read_json(self.out / "manifest.json")
        assert set(manifest["outputs"]) == {"budget.json", "loss_table.csv"}
        for name, digest in manifest["outputs"].items():
            assert file_digest(self.out / name) == digest
        assert read_json(self.out / "budget.json")["manifest"] == "manifest.json"
        assert manifest["command"][:3] == ["wgqd", "budget", "infer"]

    def test_placement_analytic(self):
        code, stdout, _ = run_cli(
            "placement", "analytic", "--p", "0.55", "--fill", "0.55", "--out", str(self.out)
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["expected_iterations"] == 6
        assert payload["lambda"] == pytest.approx(0.7985, abs=1e-4)
        assert payload["single_of_occupied"] == pytest.approx(0.653, abs=1e-3)

    def test_placement_simulate_is_reproducible(self):
        digests = []
        for name in ("first", "second"):
            out = self.out / name
            code, _, _ = run_cli(
                "placement", "simulate", "--seed", "3", "--out", str(out),
                "--set", "trials=40", "--set", "max_iterations=4",
            )
            assert code == 0
            digests.append(read_json(out / "manifest.json")["outputs"])
        assert digests[0] == digests[1]
        assert {"yield_curve.csv", "example_state.json", "fill_summary.json"} <= set(digests[0])

        curve = pd.read_csv(self.out / "first" / "yield_curve.csv")
        assert len(curve) == 4
        assert {"occupied_analytic", "single_analytic"} <= set(curve.columns)
        summary = read_json(self.out / "first" / "fill_summary.json")
        assert summary["pooled_p"] == pytest.approx(20 / 42)

    def test_g2_scenario_applies_loss_chain(self):
        for mode in ((), ("--paper-mode",)):
            config, _ = load_run_config(
                build_parser().parse_args(["g2", "simulate", *mode]), "paper_fig3", G2RunConfig
            )
            assert chain_total_db(config.loss_chain) == pytest.approx(16.1)
            assert len(config.loss_chain.stages) == 4

        code, _, _ = run_cli(
            "g2", "simulate", "--seed", "1", "--out", str(self.out), "--set", "duration=0.1"
        )
        assert code == 0
        simulation = read_json(self.out / "g2_simulation.json")
        assert simulation["loss_db"] == pytest.approx(16.1)
        expected = simulation["emitted"] * db_to_linear(16.1)
        assert simulation["guided_rate"] * 0.1 == pytest.approx(expected, abs=5 * np.sqrt(expected))
        assert sum(simulation["detected"]) == round(simulation["guided_rate"] * 0.1)

    def test_g2_pipeline(self):
        sim_out, corr_out, fit_out = (self.out / name for name in ("sim", "corr", "fit"))
        code, _, _ = run_cli(
            "g2", "simulate", "--seed", "1", "--out", str(sim_out),
            "--set", "duration=0.1", "--set", "loss_chain.stages=[]",
        )
        assert code == 0
        simulation = read_json(sim_out / "g2_simulation.json")
        assert simulation["seed"] == 1
        assert sum(simulation["detected"]) == simulation["emitted"]

        code, _, _ = run_cli(
            "g2", "correlate",
            "--stream1", str(sim_out / "stream_1.csv"),
            "--stream2", str(sim_out / "stream_2.csv"),
            "--out", str(corr_out),
        )
        assert code == 0
        curve = pd.read_csv(corr_out / "g2_curve.csv")
        assert len(curve) == 301

        code, _, _ = run_cli(
            "g2", "fit", "--curve", str(corr_out / "g2_curve.csv"), "--out", str(fit_out)
        )
        assert code == 0
        fit = read_json(fit_out / "g2_fit.json")
        assert fit["b"] > 0.7

    def test_g2_correct(self):
        code, _, _ = run_cli(
            "g2", "correct", "--raw", "0.43", "--rho", "0.7705", "--out", str(self.out)
        )
        assert code == 0
        result = read_json(self.out / "g2_corrected.json")
        assert result["g2_zero_corrected"] == pytest.approx(0.04, abs=1e-3)
        assert result["convention"] == "dilution"

    def test_g2_correct_needs_rho(self):
        code, _, stderr = run_cli("g2", "correct", "--raw", "0.43", "--out", str(self.out))
        assert code == EXIT_CONFIG
        assert json.loads(stderr)["error"] == "ConfigurationError"

    def test_missing_stream_file(self):
        code, _, _ = run_cli(
            "g2", "correlate", "--stream1", str(self.out / "nope.csv"),
            "--stream2", str(self.out / "nope.csv"), "--out", str(self.out),
        )
        assert code == EXIT_CONFIG

    def test_invalid_config_values(self):
        code, _, _ = run_cli(
            "budget", "infer", "--out", str(self.out), "--set", "detected_rate=\"fast\""
        )
        assert code == EXIT_CONFIG
        code, _, _ = run_cli(
            "budget", "infer", "--config", str(self.out / "missing.json"), "--out", str(self.out)
        )
        assert code == EXIT_CONFIG

    def test_unreachable_target(self):
        code, _, stderr = run_cli(
            "placement", "analytic", "--p", "0", "--target", "0.9", "--out", str(self.out)
        )
        assert code == EXIT_DOMAIN
        report = json.loads(stderr)
        assert report["error"] == "UnreachableTargetError"
        assert report["exit_code"] == EXIT_DOMAIN

    def test_invalid_geometry(self):
        code, _, stderr = run_cli(
            "fdtd", "run", "--out", str(self.out), "--set", "geometry.hole_depth=150"
        )
        assert code == EXIT_DOMAIN
        assert "hole_depth" in json.loads(stderr)["message"]

    def test_sweep_values_must_increase(self):
        code, _, _ = run_cli(
            "fdtd", "sweep", "--figure", "1c", "--out", str(self.out),
            "--set", "sweeps.1c.values=[60, 20]",
        )
        assert code == EXIT_CONFIG

    def test_schema(self):
        code, stdout, _ = run_cli("schema")
        assert code == 0
        schemas = json.loads(stdout)
        assert {"DeviceGeometry", "G2RunConfig", "SweepSpec"} <= set(schemas)


@pytest.mark.cli
@pytest.mark.slow
class TestCliFdtd(unittest.TestCase):

    def test_slice_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _, _ = run_cli(
                "fdtd", "run", "--out", tmp,
                "--set", "plane=\"xz\"", "--set", "frame_every=500",
            )
            assert code == 0
            result = read_json(Path(tmp) / "slice.json")
            assert result["P_total"] > 0
            assert 0 < result["eta_wg"] < 1
            assert (Path(tmp) / "frames.csv").is_file()
