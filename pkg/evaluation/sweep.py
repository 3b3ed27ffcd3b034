"""
sweep.py - replicate benchmark of the quilting estimators on simulated data.

Each (scenario, replicate) cell draws its own seed from the root seed:

    SeedSequence(entropy=root_seed, spawn_key=(scenario_index, replicate))

so results do not depend on thread count or on which cells ran before.
Every cell simulates a graph and block design, estimates the masked rank
correlation once, and scores each method with F1-oracle tuning.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Literal, Optional, Sequence

# Import external packages
import numpy as np
import pandas as pd

# Import functions from local modules
from evaluation.metrics import metrics_row
from evaluation.tuning import bic_rank, match_edge_count, tune_f1_oracle
from quilting.core_types import BlockDesign, EdgeSet, MaskedCorrelation
from quilting.exceptions import QuiltError, SweepFailureError
from quilting.glasso import PenaltyMatrix, SolverOptions
from quilting.lrgq import bsvd_complete, fit_imputed, impute, zero_impute_baseline
from quilting.madgq import (
    DEFAULT_TAU1_GRID,
    MadgqThresholds,
    block_schur_complements,
    default_tau2,
    fit_constrained,
    quilt_from_estimate,
)
from quilting.rank_corr import Statistic, estimate_masked_correlation
from simulation.simgen import ScenarioConfig, simulate_scenario
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

METHODS = ("madgq-npn", "bsvd-npn", "zero-impute")
MAX_FAILURE_SHARE = 0.20
METRIC_COLUMNS = ("tpr", "fdp", "f1")

#####################################
# Types
#####################################


@dataclass(frozen=True)
class MethodSettings:
    """Grids and solver settings shared by all methods in a sweep.

    With penalty_rule="pairwise" the lambda grid holds the C0 multipliers.
    """

    lambda_grid: tuple[float, ...] = (0.01, 0.02, 0.04, 0.08, 0.16)
    tau1_grid: tuple[float, ...] = DEFAULT_TAU1_GRID
    tau2_scale: float = 0.05
    rank_grid: tuple[int, ...] = (1, 2, 3, 4, 5)
    penalty_rule: Literal["uniform", "pairwise"] = "uniform"
    solver_tolerance: float = 1e-4
    max_sweeps: int = 500
    madgq_tuning: Literal["f1_oracle", "match_bsvd"] = "f1_oracle"
    match_lambda: float = 0.04
    spike_floor: Literal["diagonal_median", "eigen_median"] = "diagonal_median"

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iterations=self.max_sweeps, tolerance=self.solver_tolerance)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Long-format replicate records and their per-cell mean / sd summary."""

    records: pd.DataFrame
    summary: pd.DataFrame
    failed: int
    total: int


@dataclass(frozen=True)
class MethodOutcome:
    edges: EdgeSet
    selected: str


#####################################
# Method runners
#####################################


def build_penalty(design: BlockDesign, value: float, rule: str) -> PenaltyMatrix:
    if rule == "pairwise":
        return PenaltyMatrix.pairwise(design, value)
    return PenaltyMatrix.uniform(design.p, value)


def run_madgq_oracle(
    masked: MaskedCorrelation, design: BlockDesign, truth: EdgeSet, settings: MethodSettings
) -> MethodOutcome:
    """One constrained solve per lambda; every tau1 above tau2 is a post-processing step."""
    tau2 = default_tau2(design, settings.tau2_scale)
    taus = [t for t in settings.tau1_grid if t > tau2]
    if not taus:
        raise QuiltError(f"no tau1 in the grid exceeds tau2={tau2:.4g}")
    fits: dict[float, tuple] = {}

    def fitted(lam: float):
        if lam not in fits:
            theta_hat = fit_constrained(
                masked, build_penalty(design, lam, settings.penalty_rule), settings.solver_options()
            )
            fits[lam] = (theta_hat, block_schur_complements(theta_hat, design))
        return fits[lam]

    def edges_for(point: tuple[float, float]) -> EdgeSet:
        lam, tau1 = point
        theta_hat, schur = fitted(lam)
        thresholds = MadgqThresholds(tau1=tau1, tau2=tau2, c=settings.tau2_scale)
        return quilt_from_estimate(theta_hat, design, thresholds, schur).edges

    grid = [(lam, tau1) for lam in settings.lambda_grid for tau1 in taus]
    best = tune_f1_oracle(edges_for, truth, grid)
    return MethodOutcome(best.edges, f"lambda={best.value[0]:g};tau1={best.value[1]:g}")


def run_madgq_matched(
    masked: MaskedCorrelation, design: BlockDesign, target: int, settings: MethodSettings
) -> MethodOutcome:
    """Fixed lambda; tau1 bisected so the edge count matches a reference method."""
    tau2 = default_tau2(design, settings.tau2_scale)
    theta_hat = fit_constrained(
        masked, build_penalty(design, settings.match_lambda, settings.penalty_rule),
        settings.solver_options(),
    )
    schur = block_schur_complements(theta_hat, design)
    top = float(np.max(np.abs(theta_hat.theta[~np.eye(design.p, dtype=bool)]), initial=0.0))

    def edges_for(tau1: float) -> EdgeSet:
        thresholds = MadgqThresholds(tau1=tau1, tau2=tau2, c=settings.tau2_scale)
        return quilt_from_estimate(theta_hat, design, thresholds, schur).edges

    tau1, edges = match_edge_count(edges_for, target, tau2 * 1.0001, max(top, tau2 * 2) + 1e-6)
    return MethodOutcome(edges, f"lambda={settings.match_lambda:g};tau1={tau1:.6g}")


def run_bsvd_oracle(
    masked: MaskedCorrelation, design: BlockDesign, truth: EdgeSet, settings: MethodSettings
) -> MethodOutcome:
    """BIC picks the completion rank; lambda by F1 oracle on the imputed matrix."""
    rank = bic_rank(masked, design, settings.rank_grid, settings.spike_floor)
    _, factor = bsvd_complete(masked, design, rank, settings.spike_floor)
    imputed = impute(masked, factor)

    def edges_for(lam: float) -> EdgeSet:
        penalty = build_penalty(design, lam, settings.penalty_rule)
        return fit_imputed(imputed, penalty, settings.solver_options()).edges

    best = tune_f1_oracle(edges_for, truth, settings.lambda_grid)
    return MethodOutcome(best.edges, f"rank={rank};lambda={best.value:g}")


def run_zero_impute_oracle(
    masked: MaskedCorrelation, design: BlockDesign, truth: EdgeSet, settings: MethodSettings
) -> MethodOutcome:
    def edges_for(lam: float) -> EdgeSet:
        penalty = build_penalty(design, lam, settings.penalty_rule)
        return zero_impute_baseline(masked, penalty, settings.solver_options()).edges

    best = tune_f1_oracle(edges_for, truth, settings.lambda_grid)
    return MethodOutcome(best.edges, f"lambda={best.value:g}")


#####################################
# Replicates
#####################################


def replicate_seed(root_seed: int, scenario_index: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=root_seed, spawn_key=(scenario_index, replicate))


def _base_row(config: ScenarioConfig, method: str, replicate: int) -> dict[str, Any]:
    return {
        "scenario": config.name,
        "method": method,
        "o": config.o,
        "K": config.K,
        "replicate": replicate,
    }


def run_replicate(
    config: ScenarioConfig,
    scenario_index: int,
    replicate: int,
    methods: Sequence[str],
    root_seed: int,
    statistic: "Statistic | str",
    settings: MethodSettings,
) -> list[dict[str, Any]]:
    """Rows for every method on one simulated replicate; failures become status rows."""
    try:
        sim = simulate_scenario(config, replicate_seed(root_seed, scenario_index, replicate))
        masked = estimate_masked_correlation(sim.design, sim.block_data, statistic)
    except (QuiltError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.warning(f"{config.name} replicate {replicate}: simulation failed: {e}")
        return [
            {**_base_row(config, m, replicate), "status": f"failed: {e}"} for m in methods
        ]

    rows = []
    outcomes: dict[str, MethodOutcome] = {}
    for method in methods:
        row = _base_row(config, method, replicate)
        try:
            if method == "madgq-npn":
                if settings.madgq_tuning == "match_bsvd":
                    reference = outcomes.get("bsvd-npn") or run_bsvd_oracle(
                        masked, sim.design, sim.truth, settings
                    )
                    outcome = run_madgq_matched(masked, sim.design, len(reference.edges), settings)
                else:
                    outcome = run_madgq_oracle(masked, sim.design, sim.truth, settings)
            elif method == "bsvd-npn":
                outcome = run_bsvd_oracle(masked, sim.design, sim.truth, settings)
            elif method == "zero-impute":
                outcome = run_zero_impute_oracle(masked, sim.design, sim.truth, settings)
            else:
                raise QuiltError(f"unknown method {method!r}")
        except (QuiltError, np.linalg.LinAlgError, FloatingPointError) as e:
            logger.warning(f"{config.name} replicate {replicate} {method}: {e}")
            rows.append({**row, "status": f"failed: {e}"})
            continue
        outcomes[method] = outcome
        row.update(metrics_row(outcome.edges, sim.truth, masked.mask))
        row["selected"] = outcome.selected
        row["status"] = "ok"
        rows.append(row)
    logger.info(f"{config.name} replicate {replicate} done ({len(rows)} method rows)")
    return rows


#####################################
# Aggregation
#####################################


def summarize(records: pd.DataFrame) -> pd.DataFrame:
    """Mean and sd per (scenario, method, o, K) over successful replicates.

    A cell with one replicate reports sd 0 and sd_defined False.
    """
    keys = ["scenario", "method", "o", "K"]
    ok = records[records["status"] == "ok"]
    if ok.empty:
        return pd.DataFrame(columns=keys + ["replicates", "sd_defined"])
    grouped = ok.groupby(keys, sort=False)
    summary = grouped.size().rename("replicates").reset_index()
    for column in METRIC_COLUMNS:
        stats = grouped[column].agg(["mean", "std"]).reset_index(drop=True)
        summary[f"{column}_mean"] = stats["mean"].to_numpy()
        summary[f"{column}_sd"] = stats["std"].fillna(0.0).to_numpy()
    summary["sd_defined"] = summary["replicates"] > 1
    return summary


def run_sweep(
    scenarios: Sequence[ScenarioConfig],
    methods: Sequence[str] = METHODS,
    replicates: int = 50,
    root_seed: int = 0,
    statistic: "Statistic | str" = Statistic.RHO,
    settings: Optional[MethodSettings] = None,
    threads: int = 1,
) -> SweepResult:
    """Run every (scenario, replicate) cell and collect rows in a fixed order."""
    settings = settings or MethodSettings()
    unknown = [m for m in methods if m not in METHODS]
    if unknown or replicates < 1 or not scenarios:
        msg = f"invalid sweep: unknown methods {unknown}, replicates={replicates}, {len(scenarios)} scenarios"
        logger.error(msg)
        raise QuiltError(msg)

    cells = [(s, r) for s in range(len(scenarios)) for r in range(replicates)]
    logger.info(
        f"Sweep: {len(scenarios)} scenario(s) x {replicates} replicate(s) x "
        f"{len(methods)} method(s) on {threads} thread(s)"
    )
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        futures = [
            executor.submit(
                run_replicate, scenarios[s], s, r, methods, root_seed, statistic, settings
            )
            for s, r in cells
        ]
        rows = [row for future in futures for row in future.result()]

    records = pd.DataFrame(rows)
    failed = int((records["status"] != "ok").sum())
    total = len(records)
    if failed > MAX_FAILURE_SHARE * total:
        msg = f"{failed} of {total} method runs failed (more than {MAX_FAILURE_SHARE:.0%})"
        logger.error(msg)
        raise SweepFailureError(msg, failed=failed, total=total)
    if failed:
        logger.warning(f"{failed} of {total} method runs failed; excluded from summary")
    return SweepResult(records=records, summary=summarize(records), failed=failed, total=total)
