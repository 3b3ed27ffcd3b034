import json

import numpy as np
import pandas as pd
import pytest

from cli import quilt_io
from cli.config_schema import BenchmarkConfig, parse_config
from cli.quilt_cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main
from quilting.exceptions import ConfigError
from simulation.simgen import simulate_scenario

SCENARIO = {
    "name": "tiny",
    "graph": {"p": 12},
    "marginal": {"family": "gamma"},
    "K": 2,
    "o": 8,
    "n_per_block": 300,
}


def _write_config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def simulated(tmp_path):
    config = _write_config(tmp_path / "simulate.json", {"scenario": SCENARIO, "seed": 4})
    out = tmp_path / "data"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == EXIT_OK
    return out


class TestConfigSchema:
    def test_unknown_keys_are_reported_by_path(self):
        with pytest.raises(ConfigError) as info:
            parse_config("simulate", {"scenario": {"graph": {"p": 10, "bogus": 1}}, "extra": 2})
        assert set(info.value.keys) == {"scenario.graph.bogus", "extra"}

    def test_defaults(self):
        config = parse_config("simulate", {})
        scenario = config.scenario.to_config()
        assert (scenario.p, scenario.K, scenario.o, scenario.n_per_block) == (100, 2, 60, 2000)

    def test_block_sweep_over_K_keeps_slots(self):
        config = BenchmarkConfig.model_validate(
            {"base": {"name": "g"}, "block_sweep": {"K": [2, 3, 4], "slots": 120}}
        )
        scenarios = config.scenario_configs()
        assert [(s.name, s.K, s.o) for s in scenarios] == [
            ("g_K2", 2, 60),
            ("g_K3", 3, 40),
            ("g_K4", 4, 30),
        ]

    def test_block_sweep_needs_one_axis(self):
        with pytest.raises(ConfigError):
            parse_config("benchmark", {"base": {}, "block_sweep": {"o": [50], "K": [2]}})

    def test_selection_needs_grid(self):
        with pytest.raises(ConfigError):
            parse_config("estimate", {"data_dir": "x", "selection": "ebic"})


class TestSimulate:
    def test_writes_block_files_and_truth(self, simulated):
        design = json.loads((simulated / "design.json").read_text(encoding="utf-8"))
        assert design["p"] == 12
        assert len(design["blocks"]) == 2
        assert min(min(b) for b in design["blocks"]) == 1
        block = pd.read_csv(simulated / "block_1.csv")
        assert block.shape == (300, 8)
        assert list(block.columns) == [f"x{i}" for i in design["blocks"][0]]
        truth = pd.read_csv(simulated / "truth_edges.csv")
        assert list(truth.columns) == ["i", "j", "region"]
        assert (truth["i"] < truth["j"]).all()
        manifest = json.loads((simulated / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["seed"] == 4
        assert len(manifest["config_sha256"]) == 64

    def test_same_seed_gives_identical_files(self, tmp_path, simulated):
        config = _write_config(tmp_path / "again.json", {"scenario": SCENARIO, "seed": 4})
        again = tmp_path / "again"
        assert main(["simulate", "--config", str(config), "--out", str(again)]) == EXIT_OK
        names = sorted(p.name for p in simulated.iterdir())
        assert names == sorted(p.name for p in again.iterdir())
        for name in names:
            assert (simulated / name).read_bytes() == (again / name).read_bytes()

    def test_block_files_keep_full_precision(self, simulated):
        sim = simulate_scenario(parse_config("simulate", {"scenario": SCENARIO}).scenario.to_config(), 4)
        design = quilt_io.read_design(simulated / quilt_io.DESIGN_FILE)
        for written, read in zip(sim.block_data, quilt_io.read_blocks(simulated, design)):
            assert np.array_equal(written, read)

    def test_infeasible_block_layout_exits_with_config_code(self, tmp_path):
        scenario = {**SCENARIO, "o": 6}
        config = _write_config(tmp_path / "bad.json", {"scenario": scenario})
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_unknown_key_exits_with_config_code(self, tmp_path):
        config = _write_config(tmp_path / "bad.json", {"scenario": SCENARIO, "sead": 1})
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_malformed_json_exits_with_config_code(self, tmp_path):
        config = tmp_path / "bad.json"
        config.write_text("{not json", encoding="utf-8")
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestEstimate:
    def test_madgq_fixed_lambda(self, tmp_path, simulated):
        config = _write_config(tmp_path / "est.json", {"data_dir": str(simulated), "tau1": 0.05})
        out = tmp_path / "est"
        assert main(["estimate", "--config", str(config), "--out", str(out)]) == EXIT_OK
        edges = pd.read_csv(out / "edges.csv")
        assert set(edges["region"]) <= {"observed", "unobserved"}
        record = json.loads((out / "estimate.json").read_text(encoding="utf-8"))
        assert record["method"] == "madgq-npn"
        assert record["n_edges"] == len(edges)
        assert pd.read_csv(out / "theta_hat.csv").shape == (12, 12)

    def test_madgq_selects_tau1_by_stability(self, tmp_path, simulated):
        payload = {"data_dir": str(simulated), "tau1_grid": [0.05, 0.1, 0.2], "n_subsamples": 4}
        config = _write_config(tmp_path / "est.json", payload)
        out = tmp_path / "est"
        assert main(["estimate", "--config", str(config), "--out", str(out), "--seed", "11"]) == EXIT_OK
        record = json.loads((out / "estimate.json").read_text(encoding="utf-8"))
        assert record["tau1_from_stability"] is True
        assert record["tau1"] in (0.05, 0.1, 0.2)
        assert 1 <= len(record["tau1_instability"]) <= 3
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["seed"] == 11

    def test_bsvd_with_ebic(self, tmp_path, simulated):
        payload = {
            "data_dir": str(simulated),
            "method": "bsvd-npn",
            "selection": "ebic",
            "lambda_grid": [0.05, 0.1, 0.2],
            "rank_grid": [1, 2],
        }
        config = _write_config(tmp_path / "est.json", payload)
        out = tmp_path / "est"
        assert main(["estimate", "--config", str(config), "--out", str(out)]) == EXIT_OK
        record = json.loads((out / "estimate.json").read_text(encoding="utf-8"))
        assert record["rank"] in (1, 2)
        assert record["lambda"] in (0.05, 0.1, 0.2)
        assert len(record["ebic_scores"]) == 3

    def test_zero_impute_with_stability(self, tmp_path, simulated):
        payload = {
            "data_dir": str(simulated),
            "selection": "stability",
            "lambda_grid": [0.1, 0.3],
            "n_subsamples": 4,
        }
        config = _write_config(tmp_path / "est.json", payload)
        out = tmp_path / "est"
        argv = ["estimate", "--config", str(config), "--out", str(out), "--method", "zero-impute"]
        assert main(argv) == EXIT_OK
        record = json.loads((out / "estimate.json").read_text(encoding="utf-8"))
        assert record["method"] == "zero-impute"
        assert 1 <= len(record["instability"]) <= 2

    def test_missing_data_dir_exits_with_io_code(self, tmp_path):
        config = _write_config(tmp_path / "est.json", {"data_dir": str(tmp_path / "nowhere")})
        assert main(["estimate", "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_IO

    def test_non_convergence_exits_with_numerical_code(self, tmp_path, simulated):
        payload = {"data_dir": str(simulated), "max_sweeps": 1, "tolerance": 1e-14}
        config = _write_config(tmp_path / "est.json", payload)
        assert main(["estimate", "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL


class TestBenchmarkAndDiagnose:
    def test_benchmark_writes_results_and_summary(self, tmp_path):
        payload = {
            "base": SCENARIO,
            "block_sweep": {"o": [8, 10]},
            "methods": ["zero-impute"],
            "replicates": 1,
            "seed": 2,
            "settings": {"lambda_grid": [0.05, 0.1]},
        }
        config = _write_config(tmp_path / "bench.json", payload)
        out = tmp_path / "bench"
        assert main(["benchmark", "--config", str(config), "--out", str(out)]) == EXIT_OK
        results = pd.read_csv(out / "results.csv")
        assert list(results.columns[:8]) == ["scenario", "method", "o", "K", "replicate", "tpr", "fdp", "f1"]
        assert list(results["o"]) == [8, 10]
        summary = pd.read_csv(out / "summary.csv")
        assert not summary["sd_defined"].any()

    def test_benchmark_is_reproducible_across_runs(self, tmp_path):
        payload = {
            "base": SCENARIO,
            "block_sweep": {"o": [8, 10]},
            "methods": ["madgq-npn", "zero-impute"],
            "replicates": 2,
            "settings": {"lambda_grid": [0.05, 0.1], "tau1_grid": [0.05, 0.1]},
        }
        config = _write_config(tmp_path / "bench.json", payload)
        runs = []
        for name, threads in (("first", "1"), ("second", "3")):
            out = tmp_path / name
            argv = ["benchmark", "--config", str(config), "--out", str(out)]
            argv += ["--seed", "7", "--threads", threads]
            assert main(argv) == EXIT_OK
            runs.append(out)
        for name in ("results.csv", "summary.csv"):
            assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()

    def test_diagnose_on_simulated_truth(self, tmp_path, simulated):
        payload = {
            "theta_csv": str(simulated / "theta.csv"),
            "design_json": str(simulated / "design.json"),
            "tau1": 0.05,
        }
        config = _write_config(tmp_path / "diag.json", payload)
        out = tmp_path / "diag"
        assert main(["diagnose", "--config", str(config), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "diagnostics.json").read_text(encoding="utf-8"))
        assert report["d"] >= 1
        assert report["delta"] >= 0.0
        assert "population_recovers_observed" in report
        assert (out / "oracle_superset_edges.csv").exists()
        assert (out / "population_edges.csv").exists()

    def test_diagnose_scores_an_edge_list(self, tmp_path, simulated):
        payload = {
            "theta_csv": str(simulated / "theta.csv"),
            "design_json": str(simulated / "design.json"),
            "edges_csv": str(simulated / "truth_edges.csv"),
        }
        config = _write_config(tmp_path / "diag.json", payload)
        out = tmp_path / "diag"
        assert main(["diagnose", "--config", str(config), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "diagnostics.json").read_text(encoding="utf-8"))
        truth = pd.read_csv(simulated / "truth_edges.csv")
        assert report["estimate_metrics"]["n_edges"] == len(truth)
        assert report["estimate_metrics"]["fdp"] == 0.0
        assert report["estimate_metrics"]["tpr"] == 1.0
