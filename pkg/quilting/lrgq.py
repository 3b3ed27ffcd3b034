"""
lrgq.py - low-rank graph quilting.

The masked correlation is completed by a spiked block SVD: each block's
(Sigma - q I) is factored by its top-r eigenpairs and the factors are
stitched together with orthogonal Procrustes rotations over the variables
a block shares with the blocks processed before it. The completed matrix is
then handed to an ordinary (unconstrained) graphical lasso.

The zero-imputation baseline skips the completion and fills O^c with 0.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

# Import external packages
import numpy as np
from scipy.linalg import orthogonal_procrustes

# Import functions from local modules
from quilting.core_types import (
    BlockDesign,
    GraphEstimate,
    MaskedCorrelation,
    PrecisionEstimate,
    region_mask,
)
from quilting.exceptions import CorrelationInputError, MergeUnderdeterminedError
from quilting.glasso import PenaltyMatrix, SolverOptions, solve
from quilting.rank_corr import (
    DEFAULT_RIDGE,
    Statistic,
    clip_to_correlation,
    estimate_masked_correlation,
)
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

SpikeFloor = Literal["diagonal_median", "eigen_median"]
DiagonalMode = Literal["unit", "spike", "raw"]

NEGATIVE_EIGEN_TOL = 1e-8
RSS_FLOOR = 1e-24

#####################################
# Types
#####################################


@dataclass(frozen=True, eq=False)
class LowRankFactor:
    """C (p x r) and the spike floor q; C C^T + q I is the implied covariance."""

    C: np.ndarray
    q_hat: float

    @property
    def rank(self) -> int:
        return self.C.shape[1]

    def low_rank(self) -> np.ndarray:
        return self.C @ self.C.T

    def covariance(self) -> np.ndarray:
        return self.low_rank() + self.q_hat * np.eye(self.C.shape[0])


@dataclass(frozen=True, eq=False)
class LrgqResult(GraphEstimate):
    factor: LowRankFactor
    imputed: np.ndarray


#####################################
# Spiked block SVD
#####################################


def spike_floor_estimate(
    masked: MaskedCorrelation, design: BlockDesign, method: SpikeFloor = "diagonal_median"
) -> float:
    """Noise floor q: median of the diagonal, or median of pooled block eigenvalues."""
    if method == "diagonal_median":
        return float(np.median(np.diag(masked.values)))
    if method != "eigen_median":
        msg = f"unknown spike floor method {method!r}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    pooled = np.concatenate(
        [np.linalg.eigvalsh(masked.submatrix(block)) for block in design.blocks]
    )
    return float(max(np.median(pooled), 0.0))


def _top_factor(sub: np.ndarray, r: int, block: int) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(sub)
    top = eigvals[::-1][:r]
    vectors = eigvecs[:, ::-1][:, :r]
    if top.size and top.min() < -NEGATIVE_EIGEN_TOL:
        logger.warning(
            f"Block {block}: {int(np.sum(top < -NEGATIVE_EIGEN_TOL))} of the top-{r} "
            f"eigenvalues are negative (min {top.min():.3e}); clipping at 0"
        )
    factor = vectors * np.sqrt(np.maximum(top, 0.0))
    if factor.shape[1] < r:
        factor = np.hstack([factor, np.zeros((factor.shape[0], r - factor.shape[1]))])
    return factor


def bsvd_complete(
    masked: MaskedCorrelation,
    design: BlockDesign,
    r: int,
    spike_floor: SpikeFloor = "diagonal_median",
) -> tuple[np.ndarray, LowRankFactor]:
    """Complete Sigma - q I to C C^T by merging per-block rank-r factors.

    Blocks are processed in design order. Rows of C set by an earlier block
    are never overwritten; a block only fills the variables it adds.
    """
    if r < 1:
        msg = f"rank r must be at least 1, got {r}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    q_hat = spike_floor_estimate(masked, design, spike_floor)
    C = np.zeros((design.p, r))
    covered = np.zeros(design.p, dtype=bool)

    for k, block in enumerate(design.blocks):
        idx = np.asarray(block, dtype=int)
        shifted = masked.submatrix(idx) - q_hat * np.eye(idx.size)
        factor = _top_factor(shifted, r, k)
        if k == 0:
            C[idx] = factor
            covered[idx] = True
            continue
        local_overlap = np.flatnonzero(covered[idx])
        if local_overlap.size < r:
            msg = (
                f"block {k} shares {local_overlap.size} variable(s) with earlier blocks; "
                f"rank {r} needs at least {r}"
            )
            logger.error(msg)
            raise MergeUnderdeterminedError(msg, block=k, overlap=local_overlap.size, rank=r)
        rotation, _ = orthogonal_procrustes(factor[local_overlap], C[idx[local_overlap]])
        aligned = factor @ rotation
        fresh = ~covered[idx]
        C[idx[fresh]] = aligned[fresh]
        covered[idx] = True

    logger.debug(f"BSVD completion: rank {r}, spike floor q={q_hat:.4g}")
    return C @ C.T, LowRankFactor(C=C, q_hat=q_hat)


def impute(
    masked: MaskedCorrelation,
    factor: LowRankFactor,
    diagonal: DiagonalMode = "unit",
    keep_observed: bool = True,
    ridge: Optional[float] = DEFAULT_RIDGE,
) -> np.ndarray:
    """Full correlation estimate: observed entries from masked, O^c from the completion.

    diagonal applies to the completion: "unit" resets it to 1, "spike" adds q I
    and rescales to unit diagonal, "raw" keeps C C^T.
    """
    full = factor.low_rank()
    if diagonal == "unit":
        np.fill_diagonal(full, 1.0)
    elif diagonal == "spike":
        full = factor.covariance()
        scale = np.sqrt(np.maximum(np.diag(full), np.finfo(float).tiny))
        full = full / np.outer(scale, scale)
    elif diagonal != "raw":
        msg = f"unknown diagonal mode {diagonal!r}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if keep_observed:
        full = np.where(masked.mask.observed, masked.values, full)
    full = (full + full.T) / 2.0
    if ridge is None:
        return full
    return clip_to_correlation(full, ridge)


def completion_bic(
    masked: MaskedCorrelation,
    design: BlockDesign,
    r: int,
    spike_floor: SpikeFloor = "diagonal_median",
) -> Optional[float]:
    """BIC of a rank-r completion over observed off-diagonal pairs; None if infeasible.

    m log(RSS / m) + (p r - r (r - 1) / 2) log m, with RSS floored at m * 1e-24.
    """
    try:
        completed, _ = bsvd_complete(masked, design, r, spike_floor)
    except MergeUnderdeterminedError:
        logger.warning(f"Rank {r} is infeasible for this design; skipping")
        return None
    observed = region_mask(masked.mask, "observed")
    m = int(observed.sum())
    if m == 0:
        return None
    rss = float(np.sum((masked.values[observed] - completed[observed]) ** 2))
    rss = max(rss, m * RSS_FLOOR)
    params = design.p * r - r * (r - 1) / 2.0
    return m * np.log(rss / m) + params * np.log(m)


#####################################
# Pipelines
#####################################


def _masked_input(
    design: BlockDesign,
    block_data: Optional[Sequence[np.ndarray]],
    masked: Optional[MaskedCorrelation],
    statistic: "Statistic | str",
    ridge: Optional[float],
) -> MaskedCorrelation:
    if (block_data is None) == (masked is None):
        msg = "provide exactly one of block_data or masked"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if masked is None:
        masked = estimate_masked_correlation(design, block_data, statistic, ridge=ridge)
    return masked


def fit_imputed(
    imputed: np.ndarray,
    penalty: PenaltyMatrix,
    options: Optional[SolverOptions] = None,
) -> GraphEstimate:
    """Unconstrained graphical lasso on a full imputed correlation matrix."""
    options = options or SolverOptions()
    unconstrained = SolverOptions(
        max_iterations=options.max_iterations,
        tolerance=options.tolerance,
        inner_tolerance=options.inner_tolerance,
    )
    theta_hat: PrecisionEstimate = solve(imputed, penalty, unconstrained)
    return GraphEstimate(theta_hat=theta_hat, edges=theta_hat.edges)


def run_lrgq(
    design: BlockDesign,
    r: int,
    penalty: PenaltyMatrix,
    block_data: Optional[Sequence[np.ndarray]] = None,
    masked: Optional[MaskedCorrelation] = None,
    statistic: "Statistic | str" = Statistic.RHO,
    options: Optional[SolverOptions] = None,
    ridge: Optional[float] = DEFAULT_RIDGE,
    spike_floor: SpikeFloor = "diagonal_median",
    diagonal: DiagonalMode = "unit",
) -> LrgqResult:
    masked = _masked_input(design, block_data, masked, statistic, ridge)
    logger.info(f"LRGQ: p={design.p}, K={design.K}, rank={r}")
    _, factor = bsvd_complete(masked, design, r, spike_floor)
    imputed = impute(masked, factor, diagonal=diagonal, ridge=ridge if ridge is not None else DEFAULT_RIDGE)
    fitted = fit_imputed(imputed, penalty, options)
    return LrgqResult(theta_hat=fitted.theta_hat, edges=fitted.edges, factor=factor, imputed=imputed)


def zero_impute_baseline(
    masked: MaskedCorrelation,
    penalty: PenaltyMatrix,
    options: Optional[SolverOptions] = None,
    ridge: float = DEFAULT_RIDGE,
) -> GraphEstimate:
    """Graphical lasso on the 0-filled masked correlation."""
    filled = clip_to_correlation(np.array(masked.values), ridge)
    logger.info(
        f"Zero-impute baseline: p={masked.p}, {masked.mask.n_unobserved()} pairs filled with 0"
    )
    return fit_imputed(filled, penalty, options)
