"""
quilt_cli.py - command line for graph quilting.

Subcommands:

    simulate   write per-block datasets, the design and the true graph
    estimate   estimate a graph from per-block datasets
    benchmark  replicate sweep of all methods, long-format results CSV
    diagnose   population diagnostics of a known precision under a design

Run from the project root:

    python -m cli.quilt_cli simulate --config configs/gamma.json --out outputs/gamma
    python -m cli.quilt_cli benchmark --config configs/gamma_sweep.json --replicates 3

Exit codes: 0 success, 2 config or validation, 3 numerical failure, 4 I/O.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
import argparse
import json
import math
import pathlib
import sys
import time
from typing import Any, Optional, Sequence

# Import external packages
import numpy as np
import pandas as pd

# Import functions from local modules
from cli import quilt_io
from cli.config_schema import (
    BenchmarkConfig,
    DiagnoseConfig,
    EstimateConfig,
    SimulateConfig,
    config_digest_source,
    load_config,
)
from evaluation.metrics import metrics_row
from evaluation.sweep import build_penalty, run_sweep
from evaluation.tuning import (
    bic_rank,
    select_by_ebic,
    select_tau1_by_stability,
    stability_select,
)
from quilting.core_types import (
    BlockDesign,
    EdgeSet,
    MaskedCorrelation,
    PrecisionEstimate,
    induced_pair_set,
)
from quilting.exceptions import ConvergenceError, QuiltError, SweepFailureError
from quilting.glasso import SolverOptions
from quilting.lrgq import bsvd_complete, fit_imputed, impute, zero_impute_baseline
from quilting.madgq import (
    DEFAULT_TAU1,
    MadgqThresholds,
    fit_constrained,
    minimal_superset_oracle,
    population_diagnostics,
    quilt_from_estimate,
)
from quilting.rank_corr import estimate_masked_correlation
from simulation.simgen import simulate_scenario
from utils.utils_config import (
    get_default_statistic,
    get_output_dir,
    get_root_seed,
    get_thread_count,
)
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

RESULT_LEAD_COLUMNS = ["scenario", "method", "o", "K", "replicate", "tpr", "fdp", "f1"]

#####################################
# Argument parsing
#####################################


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=pathlib.Path, help="JSON run configuration")
    shared.add_argument("--seed", type=int, help="root seed (overrides the config)")
    shared.add_argument("--threads", type=int, help="replicate worker threads")
    shared.add_argument("--out", type=pathlib.Path, help="output directory")
    shared.add_argument("--statistic", choices=["rho", "tau", "pearson"])
    shared.add_argument("--method", choices=["madgq-npn", "bsvd-npn", "zero-impute"])
    shared.add_argument("--replicates", type=int, help="benchmark replicates per cell")

    parser = argparse.ArgumentParser(
        prog="quilt", description="Nonparanormal graph quilting from block-observed data."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "simulate per-block data with a known graph"),
        ("estimate", "estimate a graph from per-block data"),
        ("benchmark", "run a replicate sweep of all methods"),
        ("diagnose", "population diagnostics for a known precision matrix"),
    ):
        commands.add_parser(name, parents=[shared], help=help_text)
    return parser


def _out_dir(args: argparse.Namespace) -> pathlib.Path:
    out = args.out if args.out is not None else get_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_number(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


#####################################
# simulate
#####################################


def cmd_simulate(config: SimulateConfig, args: argparse.Namespace) -> pathlib.Path:
    """Write design.json, block_{k}.csv, truth_edges.csv and the latent matrices."""
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else config.seed
    seed = seed if seed is not None else get_root_seed()
    sim = simulate_scenario(config.scenario.to_config(), seed)
    mask = induced_pair_set(sim.design)

    quilt_io.write_design(sim.design, out / quilt_io.DESIGN_FILE)
    quilt_io.write_blocks(out, sim.design, sim.block_data)
    quilt_io.write_edges(sim.truth, out / quilt_io.TRUTH_FILE, mask)
    quilt_io.write_matrix(sim.sigma, out / "sigma.csv")
    if sim.theta is not None:
        quilt_io.write_matrix(sim.theta, out / "theta.csv")
    quilt_io.write_mask(mask, out / "mask.csv")
    quilt_io.write_manifest(out, "simulate", config_digest_source(config), seed)
    logger.info(f"Simulated {sim.design.K} block file(s) and {len(sim.truth)} true edges into {out}")
    return out


#####################################
# estimate
#####################################


def _fit(
    method: str,
    masked: MaskedCorrelation,
    design: BlockDesign,
    lam: float,
    config: EstimateConfig,
    options: SolverOptions,
    imputed: Optional[np.ndarray],
    tau1: float = DEFAULT_TAU1,
) -> tuple[PrecisionEstimate, EdgeSet, dict[str, Any]]:
    """One fit at a single lambda; returns the precision, the edges and run details."""
    penalty = build_penalty(design, lam, config.penalty_rule)
    if method == "madgq-npn":
        theta_hat = fit_constrained(masked, penalty, options)
        thresholds = MadgqThresholds(tau1=tau1, tau2=config.tau2, c=config.c)
        result = quilt_from_estimate(theta_hat, design, thresholds)
        details = {
            "tau1": result.thresholds.tau1,
            "tau2": result.thresholds.tau2,
            "superset_nodes": sorted(i + 1 for i in result.node_set_W),
            "n_edges_observed": len(result.edges_O),
            "n_edges_unobserved": len(result.edges_Oc_superset),
        }
        return theta_hat, result.edges, details
    if method == "bsvd-npn":
        estimate = fit_imputed(imputed, penalty, options)
        return estimate.theta_hat, estimate.edges, {}
    estimate = zero_impute_baseline(masked, penalty, options)
    return estimate.theta_hat, estimate.edges, {}


def cmd_estimate(config: EstimateConfig, args: argparse.Namespace) -> pathlib.Path:
    """Write edges.csv, theta_hat.csv, correlation.csv, mask.csv and estimate.json."""
    out = _out_dir(args)
    started = time.perf_counter()
    data_dir = pathlib.Path(config.data_dir)
    design = quilt_io.read_design(data_dir / quilt_io.DESIGN_FILE)
    block_data = quilt_io.read_blocks(data_dir, design)
    method = args.method or config.method
    statistic = args.statistic or config.statistic or get_default_statistic()
    seed = args.seed if args.seed is not None else config.seed
    seed = seed if seed is not None else get_root_seed()
    options = SolverOptions(max_iterations=config.max_sweeps, tolerance=config.tolerance)
    masked = estimate_masked_correlation(design, block_data, statistic)
    # lambda selection runs at the configured tau1, or the default before tau1 is selected
    tau1 = config.tau1 if config.tau1 is not None else DEFAULT_TAU1

    record: dict[str, Any] = {"method": method, "statistic": statistic}
    imputed = None
    if method == "bsvd-npn":
        rank = config.rank or bic_rank(masked, design, config.rank_grid, config.spike_floor)
        _, factor = bsvd_complete(masked, design, rank, config.spike_floor)
        imputed = impute(masked, factor)
        record.update({"rank": rank, "rank_from_bic": config.rank is None, "q_hat": factor.q_hat})

    lam = config.lam
    if config.selection == "ebic":
        sigma_input = imputed if imputed is not None else masked
        index, _, scores = select_by_ebic(
            lambda value: _fit(method, masked, design, value, config, options, imputed, tau1)[0],
            sigma_input,
            config.lambda_grid,
            n_effective=min(design.sample_sizes),
            gamma=config.ebic_gamma,
        )
        lam = config.lambda_grid[index]
        record["ebic_scores"] = [_json_number(s) for s in scores]
    elif config.selection == "stability":

        def edges_on(sample: Sequence[np.ndarray], value: float) -> EdgeSet:
            sub_design = BlockDesign(design.p, design.blocks, tuple(len(d) for d in sample))
            sub_masked = estimate_masked_correlation(sub_design, sample, statistic)
            sub_imputed = None
            if imputed is not None:
                _, sub_factor = bsvd_complete(sub_masked, sub_design, record["rank"], config.spike_floor)
                sub_imputed = impute(sub_masked, sub_factor)
            return _fit(method, sub_masked, sub_design, value, config, options, sub_imputed, tau1)[1]

        stability = stability_select(
            edges_on,
            block_data,
            config.lambda_grid,
            subsample_fraction=config.subsample_fraction,
            n_subsamples=config.n_subsamples,
            seed=seed,
        )
        lam = stability.value
        record["instability"] = list(stability.instability)

    if method == "madgq-npn" and config.tau1 is None:
        tau1_stability = select_tau1_by_stability(
            design,
            block_data,
            build_penalty(design, lam, config.penalty_rule),
            tau1_grid=config.tau1_grid,
            statistic=statistic,
            tau2=config.tau2,
            c=config.c,
            options=options,
            subsample_fraction=config.subsample_fraction,
            n_subsamples=config.n_subsamples,
            seed=seed,
        )
        tau1 = tau1_stability.value
        record["tau1_instability"] = list(tau1_stability.instability)
    if method == "madgq-npn":
        record["tau1_from_stability"] = config.tau1 is None

    theta_hat, edges, details = _fit(method, masked, design, lam, config, options, imputed, tau1)
    record.update(details)
    record.update({"lambda": lam, "selection": config.selection, "n_edges": len(edges)})

    quilt_io.write_edges(edges, out / "edges.csv", masked.mask)
    quilt_io.write_matrix(theta_hat.theta, out / "theta_hat.csv")
    quilt_io.write_matrix(masked.values, out / "correlation.csv")
    quilt_io.write_mask(masked.mask, out / "mask.csv")
    (out / "estimate.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    quilt_io.write_manifest(out, "estimate", config_digest_source(config), seed)
    quilt_io.write_runtime(
        out,
        {"seconds": round(time.perf_counter() - started, 3), "sweeps": theta_hat.sweeps},
    )
    logger.info(f"{method}: {len(edges)} edges at lambda={lam:g} written to {out}")
    return out


#####################################
# benchmark
#####################################


def results_frame(records: pd.DataFrame) -> pd.DataFrame:
    """Records with the fixed leading columns first, then the rest in arrival order."""
    lead = [c for c in RESULT_LEAD_COLUMNS if c in records.columns]
    rest = [c for c in records.columns if c not in lead]
    return records[lead + rest]


def cmd_benchmark(config: BenchmarkConfig, args: argparse.Namespace) -> pathlib.Path:
    """Write results.csv (one row per replicate and method) and summary.csv."""
    out = _out_dir(args)
    started = time.perf_counter()
    seed = args.seed if args.seed is not None else config.seed
    seed = seed if seed is not None else get_root_seed()
    threads = args.threads or config.threads or get_thread_count()
    replicates = args.replicates or config.replicates
    methods = [args.method] if args.method else list(config.methods)
    statistic = args.statistic or config.statistic or get_default_statistic()

    result = run_sweep(
        config.scenario_configs(),
        methods=methods,
        replicates=replicates,
        root_seed=seed,
        statistic=statistic,
        settings=config.settings.to_settings(),
        threads=threads,
    )
    quilt_io.write_table(results_frame(result.records), out / "results.csv")
    quilt_io.write_table(result.summary, out / "summary.csv")
    quilt_io.write_manifest(out, "benchmark", config_digest_source(config), seed)
    quilt_io.write_runtime(
        out,
        {
            "seconds": round(time.perf_counter() - started, 3),
            "threads": threads,
            "failed_runs": result.failed,
            "total_runs": result.total,
        },
    )
    logger.info(f"Benchmark: {result.total} method runs ({result.failed} failed) written to {out}")
    return out


#####################################
# diagnose
#####################################


def cmd_diagnose(config: DiagnoseConfig, args: argparse.Namespace) -> pathlib.Path:
    """Write diagnostics.json, theta_tilde.csv and the oracle superset edge list.

    With edges_csv, an estimated edge list (1-based, as written by estimate)
    is scored against the true graph by region.
    """
    out = _out_dir(args)
    theta = quilt_io.read_matrix(pathlib.Path(config.theta_csv))
    design = quilt_io.read_design(pathlib.Path(config.design_json))
    diagnostics = population_diagnostics(theta, design)
    nodes, oracle_edges = minimal_superset_oracle(diagnostics, design)
    window = diagnostics.exact_recovery_window()

    report: dict[str, Any] = {
        "nu": _json_number(diagnostics.nu),
        "delta": diagnostics.delta,
        "psi": _json_number(diagnostics.psi),
        "d": diagnostics.d,
        "d_tilde": diagnostics.d_tilde,
        "s_tilde": diagnostics.s_tilde,
        "kappa_tilde": diagnostics.kappa_tilde,
        "kappa_sigma_tilde": diagnostics.kappa_sigma_tilde,
        "kappa_gamma_tilde": diagnostics.kappa_gamma_tilde,
        "alpha": diagnostics.alpha,
        "n_true_edges_observed": len(diagnostics.edges_O),
        "n_true_edges_unobserved": len(diagnostics.edges_Oc),
        "tau1_window": list(window) if window else None,
        "oracle_superset_nodes": sorted(i + 1 for i in nodes),
    }
    mask = induced_pair_set(design)
    if config.tau1 is not None:
        tilde = PrecisionEstimate.from_theta(diagnostics.theta_tilde)
        thresholds = MadgqThresholds(tau1=config.tau1, tau2=config.tau2)
        result = quilt_from_estimate(tilde, design, thresholds, diagnostics.schur_tilde)
        report["population_recovers_observed"] = result.edges_O == diagnostics.edges_O
        report["population_matches_oracle_superset"] = result.edges_Oc_superset == oracle_edges
        quilt_io.write_edges(result.edges, out / "population_edges.csv", mask)
    if config.edges_csv is not None:
        estimate = quilt_io.read_edges(pathlib.Path(config.edges_csv), design.p)
        row = metrics_row(estimate, diagnostics.true_edges, mask)
        report["estimate_metrics"] = {
            key: value if isinstance(value, int) else _json_number(value) for key, value in row.items()
        }
        report["estimate_covers_oracle_superset"] = oracle_edges.edges <= estimate.edges

    (out / "diagnostics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    quilt_io.write_matrix(diagnostics.theta_tilde, out / "theta_tilde.csv")
    quilt_io.write_edges(oracle_edges, out / "oracle_superset_edges.csv", mask)
    quilt_io.write_manifest(out, "diagnose", config_digest_source(config), None)
    logger.info(f"Diagnostics written to {out}")
    return out


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "diagnose": cmd_diagnose,
}

#####################################
# Define main function for this module.
#####################################


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    logger.info(f"START quilt {args.command}")
    try:
        config = load_config(args.command, args.config)
        COMMANDS[args.command](config, args)
    except (ConvergenceError, SweepFailureError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.error(f"Numerical failure in {args.command}: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O failure in {args.command}: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(f"Invalid input for {args.command}: {e}")
        return EXIT_CONFIG
    except QuiltError as e:
        logger.error(f"Quilting failure in {args.command}: {e}")
        return EXIT_NUMERICAL
    logger.info(f"END quilt {args.command}")
    return EXIT_OK


#####################################
# Conditional Execution
#####################################

if __name__ == "__main__":
    sys.exit(main())
