"""
tuning.py - hyperparameter selection for the quilting estimators.

    tune_f1_oracle     best F1 against the true graph (simulation only)
    ebic, select_by_ebic
    bic_rank           rank of the block SVD completion
    stability_select   StARS-style subsampling stability
    select_tau1_by_stability
                       the same on the observed-pair edges of MAD_GQ
    match_edge_count   bisection on tau1 to hit a target edge count
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

# Import external packages
import numpy as np

# Import functions from local modules
from evaluation.metrics import RecoveryMetrics, compare_edges
from quilting.core_types import (
    BlockDesign,
    EdgeSet,
    MaskedCorrelation,
    PrecisionEstimate,
    induced_pair_set,
)
from quilting.exceptions import ConvergenceError, CorrelationInputError, QuiltError
from quilting.glasso import PenaltyMatrix, SolverOptions
from quilting.lrgq import SpikeFloor, completion_bic
from quilting.madgq import (
    DEFAULT_TAU1_GRID,
    DEFAULT_TAU2_SCALE,
    default_tau2,
    fit_constrained,
    threshold_edges_O,
)
from quilting.rank_corr import Statistic, estimate_masked_correlation
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

DEFAULT_EBIC_GAMMA = 0.5
DEFAULT_INSTABILITY_THRESHOLD = 0.05
DEFAULT_SUBSAMPLE_FRACTION = 0.5
DEFAULT_N_SUBSAMPLES = 20
DEFAULT_MATCH_TOLERANCE = 0.05

#####################################
# Types
#####################################


@dataclass(frozen=True)
class TuningResult:
    index: int
    value: Any
    edges: EdgeSet
    metrics: RecoveryMetrics
    evaluated: int


@dataclass(frozen=True)
class StabilityResult:
    value: Any
    instability: tuple[float, ...]
    grid: tuple[Any, ...]


#####################################
# F1 oracle
#####################################


def _f1_score(metrics: RecoveryMetrics) -> float:
    # no truth and no estimate counts as a perfect fit
    return metrics.f1 if metrics.f1 is not None else 1.0


def tune_f1_oracle(
    runner: Callable[[Any], EdgeSet],
    truth: EdgeSet,
    grid: Sequence[Any],
) -> TuningResult:
    """Evaluate every grid point; highest F1 wins, then fewer edges, then lower index.

    Grid points whose runner raises a quilting or linear-algebra error are skipped.
    """
    if not grid:
        msg = "tuning grid is empty"
        logger.error(msg)
        raise CorrelationInputError(msg)
    best: Optional[tuple[tuple[float, int, int], TuningResult]] = None
    evaluated = 0
    for index, value in enumerate(grid):
        try:
            edges = runner(value)
        except (QuiltError, np.linalg.LinAlgError, FloatingPointError) as e:
            logger.warning(f"Grid point {value!r} failed: {e}")
            continue
        evaluated += 1
        metrics = compare_edges(edges, truth)
        key = (-_f1_score(metrics), len(edges), index)
        if best is None or key < best[0]:
            best = (key, TuningResult(index, value, edges, metrics, 0))
    if best is None:
        msg = f"all {len(grid)} grid points failed"
        logger.error(msg)
        raise QuiltError(msg)
    chosen = best[1]
    return TuningResult(chosen.index, chosen.value, chosen.edges, chosen.metrics, evaluated)


#####################################
# Information criteria
#####################################


def ebic(
    sigma_input,
    theta_hat,
    n_effective: float,
    gamma: float = DEFAULT_EBIC_GAMMA,
) -> float:
    """-n (log det Theta - <S, Theta>) + |E| log n + 4 gamma |E| log p."""
    theta = np.asarray(theta_hat.theta if isinstance(theta_hat, PrecisionEstimate) else theta_hat, dtype=float)
    sigma = np.asarray(sigma_input.values if isinstance(sigma_input, MaskedCorrelation) else sigma_input, dtype=float)
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        msg = "eBIC needs a positive definite precision matrix"
        logger.error(msg)
        raise CorrelationInputError(msg) from None
    p = theta.shape[0]
    _, logdet = np.linalg.slogdet(theta)
    n_edges = int(np.sum(np.triu(theta != 0.0, k=1)))
    loglik = logdet - float(np.sum(sigma * theta))
    return float(
        -n_effective * loglik
        + n_edges * np.log(n_effective)
        + 4.0 * gamma * n_edges * np.log(p)
    )


def select_by_ebic(
    fit: Callable[[Any], PrecisionEstimate],
    sigma_input,
    grid: Sequence[Any],
    n_effective: float,
    gamma: float = DEFAULT_EBIC_GAMMA,
) -> tuple[int, PrecisionEstimate, tuple[float, ...]]:
    """(index, estimate, scores) of the smallest eBIC over the grid; ties go to the lower index."""
    scores = []
    best_index, best_estimate = -1, None
    for index, value in enumerate(grid):
        try:
            estimate = fit(value)
        except ConvergenceError as e:
            logger.warning(f"eBIC grid point {value!r} did not converge: {e}")
            scores.append(float("inf"))
            continue
        score = ebic(sigma_input, estimate, n_effective, gamma)
        scores.append(score)
        if best_estimate is None or score < scores[best_index]:
            best_index, best_estimate = index, estimate
    if best_estimate is None:
        msg = "no grid point produced an estimate for eBIC selection"
        logger.error(msg)
        raise QuiltError(msg)
    return best_index, best_estimate, tuple(scores)


def bic_rank(
    masked: MaskedCorrelation,
    design: BlockDesign,
    r_grid: Sequence[int],
    spike_floor: SpikeFloor = "diagonal_median",
) -> int:
    """Completion rank with the smallest BIC; ties go to the smaller rank."""
    best_r, best_score = None, None
    for r in sorted(set(int(r) for r in r_grid)):
        score = completion_bic(masked, design, r, spike_floor)
        if score is None:
            continue
        logger.debug(f"BIC rank {r}: {score:.6g}")
        if best_score is None or score < best_score:
            best_r, best_score = r, score
    if best_r is None:
        msg = f"no rank in {list(r_grid)} is feasible for this design"
        logger.error(msg)
        raise QuiltError(msg)
    logger.info(f"BIC selected rank {best_r}")
    return best_r


#####################################
# Stability selection
#####################################


def edge_instability(edge_sets: Sequence[EdgeSet]) -> float:
    """Mean over all unordered pairs of 2 xi (1 - xi), xi the selection frequency."""
    p = edge_sets[0].p
    frequency = np.zeros((p, p))
    for edges in edge_sets:
        frequency += edges.adjacency()
    xi = frequency[np.triu_indices(p, k=1)] / len(edge_sets)
    return float(np.mean(2.0 * xi * (1.0 - xi))) if xi.size else 0.0


def _is_unregularized(value: Any) -> bool:
    return isinstance(value, (int, float, np.number)) and float(value) == 0.0


def stability_select(
    runner: Callable[[Sequence[np.ndarray], Any], EdgeSet],
    block_data: Sequence[np.ndarray],
    grid: Sequence[Any],
    subsample_fraction: float = DEFAULT_SUBSAMPLE_FRACTION,
    n_subsamples: int = DEFAULT_N_SUBSAMPLES,
    threshold: float = DEFAULT_INSTABILITY_THRESHOLD,
    seed: Optional[int] = None,
    saturated_edges: Optional[int] = None,
) -> StabilityResult:
    """Walk the grid from the largest (most regularising) value down and keep
    the last value before the edge instability first exceeds the threshold.

    A zero value, or one where every subsample returns the saturated graph
    (saturated_edges edges, default all p(p-1)/2 pairs), is never selected
    unless it is the only grid point. Every block is subsampled without
    replacement to the same fraction of its rows.
    """
    if not grid:
        msg = "stability grid is empty"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if n_subsamples < 2:
        msg = f"stability selection needs at least 2 subsamples, got {n_subsamples}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    sizes = [int(np.floor(subsample_fraction * np.asarray(d).shape[0])) for d in block_data]
    if min(sizes) < 3:
        msg = f"subsample fraction {subsample_fraction} leaves fewer than 3 rows in a block"
        logger.error(msg)
        raise CorrelationInputError(msg)

    rng = np.random.default_rng(seed)
    subsamples = []
    for _ in range(n_subsamples):
        subsamples.append(
            [np.asarray(d)[rng.choice(np.asarray(d).shape[0], size=m, replace=False)]
             for d, m in zip(block_data, sizes)]
        )

    ordered = sorted(grid, reverse=True)
    selected = ordered[0]
    instabilities = []
    for value in ordered:
        edge_sets = [runner(sample, value) for sample in subsamples]
        score = edge_instability(edge_sets)
        instabilities.append(score)
        logger.debug(f"Instability at {value!r}: {score:.4f}")
        if score > threshold:
            break
        full = saturated_edges
        if full is None:
            full = edge_sets[0].p * (edge_sets[0].p - 1) // 2
        saturated = full > 0 and all(len(edges) >= full for edges in edge_sets)
        if len(ordered) > 1 and (_is_unregularized(value) or saturated):
            logger.debug(f"Skipping {value!r}: unregularised or saturated graph")
            break
        selected = value
    logger.info(f"Stability selection chose {selected!r}")
    return StabilityResult(value=selected, instability=tuple(instabilities), grid=tuple(ordered))


def select_tau1_by_stability(
    design: BlockDesign,
    block_data: Sequence[np.ndarray],
    penalty: PenaltyMatrix,
    tau1_grid: Sequence[float] = DEFAULT_TAU1_GRID,
    statistic: "Statistic | str" = Statistic.RHO,
    tau2: Optional[float] = None,
    c: float = DEFAULT_TAU2_SCALE,
    options: Optional[SolverOptions] = None,
    subsample_fraction: float = DEFAULT_SUBSAMPLE_FRACTION,
    n_subsamples: int = DEFAULT_N_SUBSAMPLES,
    threshold: float = DEFAULT_INSTABILITY_THRESHOLD,
    seed: Optional[int] = None,
) -> StabilityResult:
    """Stability selection of tau1 on the observed-pair edges of MAD_GQ.

    One constrained solve per subsample; every tau1 is a threshold on it.
    Grid values at or below tau2 are dropped.
    """
    floor = tau2 if tau2 is not None else default_tau2(design, c)
    candidates = [float(t) for t in tau1_grid if t > floor]
    if not candidates:
        msg = f"no tau1 in {list(tau1_grid)} exceeds tau2={floor:.4g}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    mask = induced_pair_set(design)
    fits: dict[int, PrecisionEstimate] = {}

    def observed_edges(sample: Sequence[np.ndarray], tau1: float) -> EdgeSet:
        key = id(sample)
        if key not in fits:
            sub_design = BlockDesign(design.p, design.blocks, tuple(len(d) for d in sample))
            sub_masked = estimate_masked_correlation(sub_design, sample, statistic)
            fits[key] = fit_constrained(sub_masked, penalty, options)
        return threshold_edges_O(fits[key], mask, tau1)

    return stability_select(
        observed_edges,
        block_data,
        candidates,
        subsample_fraction=subsample_fraction,
        n_subsamples=n_subsamples,
        threshold=threshold,
        seed=seed,
        saturated_edges=mask.n_observed_offdiag(),
    )


#####################################
# Edge-count matching
#####################################


def match_edge_count(
    edges_for_tau1: Callable[[float], EdgeSet],
    target: int,
    lo: float,
    hi: float,
    tolerance: float = DEFAULT_MATCH_TOLERANCE,
    max_steps: int = 60,
) -> tuple[float, EdgeSet]:
    """Bisect tau1 in (lo, hi) until the edge count is within tolerance of target.

    Larger tau1 gives fewer observed edges. Returns the closest tau1 seen
    when the tolerance band is never reached.
    """
    if not 0 < lo < hi:
        msg = f"match_edge_count needs 0 < lo < hi, got ({lo}, {hi})"
        logger.error(msg)
        raise CorrelationInputError(msg)
    band = max(tolerance * target, 0.5)
    best: Optional[tuple[float, float, EdgeSet]] = None
    for _ in range(max_steps):
        tau1 = (lo + hi) / 2.0
        edges = edges_for_tau1(tau1)
        miss = len(edges) - target
        if best is None or abs(miss) < best[0]:
            best = (abs(miss), tau1, edges)
        if abs(miss) <= band:
            break
        if miss > 0:
            lo = tau1
        else:
            hi = tau1
    logger.debug(f"Edge-count match: target {target}, got {len(best[2])} at tau1={best[1]:.4g}")
    return best[1], best[2]
