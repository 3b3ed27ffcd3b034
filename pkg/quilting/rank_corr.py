"""
rank_corr.py - block-wise rank correlations, cross-block averaging,
sine de-biasing and positive-semidefinite repair.

Pipeline used by the estimators (see estimate_masked_correlation):

    per-block data --> spearman_block / kendall_block / pearson_block
                   --> combine_blocks (average over blocks holding a pair)
                   --> sine_transform (2 sin(pi rho / 6) or sin(pi tau / 2))
                   --> psd_repair (eigenvalue clipping per block)

Pairs never observed together stay exactly 0 and are marked False in the mask.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass
from enum import Enum
from typing import Literal, Optional, Sequence

# Import external packages
import numpy as np
from scipy import stats

# Import functions from local modules
from quilting.core_types import (
    BlockDesign,
    MaskedCorrelation,
    induced_pair_set,
)
from quilting.exceptions import CorrelationInputError, DegenerateColumnError
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

DEFAULT_RIDGE = 1e-4
DEFAULT_REPAIR_ROUNDS = 25
PSD_TOLERANCE = 1e-12

OnDegenerate = Literal["raise", "zero"]
Weighting = Literal["equal", "sample_size"]


class Statistic(str, Enum):
    """Correlation statistic computed inside each block."""

    RHO = "rho"
    TAU = "tau"
    PEARSON = "pearson"

    @classmethod
    def parse(cls, value: "str | Statistic") -> "Statistic":
        try:
            return cls(value)
        except ValueError:
            msg = f"unknown statistic {value!r}; expected one of rho, tau, pearson"
            logger.error(msg)
            raise CorrelationInputError(msg) from None


@dataclass(frozen=True, eq=False)
class BlockRankCorrelation:
    """Statistics of one block, in the block's own column order."""

    block_index: int
    rho: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None
    pearson: Optional[np.ndarray] = None
    degenerate_columns: tuple[int, ...] = ()

    def get(self, statistic: "Statistic | str") -> np.ndarray:
        statistic = Statistic.parse(statistic)
        values = getattr(self, statistic.value)
        if values is None:
            msg = f"block {self.block_index} has no {statistic.value} statistic"
            logger.error(msg)
            raise CorrelationInputError(msg)
        return values


#####################################
# Rank statistics
#####################################


def ranks(column) -> np.ndarray:
    """Midranks 1..n; ties share the average of their rank range."""
    values = np.asarray(column, dtype=float)
    if values.ndim != 1 or values.size < 2:
        msg = f"ranks need a vector of at least 2 values, got shape {values.shape}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    return stats.rankdata(values, method="average")


def degenerate_columns(data: np.ndarray) -> tuple[int, ...]:
    """Columns whose values are all equal."""
    values = np.asarray(data, dtype=float)
    return tuple(np.flatnonzero(np.all(values == values[:1, :], axis=0)).tolist())


def _check_block_data(data, min_rows: int, name: str) -> np.ndarray:
    values = np.asarray(data, dtype=float)
    if values.ndim != 2:
        msg = f"{name} expects an n x p matrix, got shape {values.shape}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if values.shape[0] < min_rows:
        msg = f"{name} needs at least {min_rows} rows, got {values.shape[0]}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if not np.all(np.isfinite(values)):
        msg = f"{name} input contains non-finite values"
        logger.error(msg)
        raise CorrelationInputError(msg)
    return values


def _handle_degenerate(
    matrix: np.ndarray, constant: Sequence[int], on_degenerate: OnDegenerate, name: str
) -> np.ndarray:
    if constant:
        if on_degenerate == "raise":
            msg = f"{name}: constant column(s) {list(constant)} have undefined correlation"
            logger.error(msg)
            raise DegenerateColumnError(msg, constant)
        logger.warning(f"{name}: constant column(s) {list(constant)} set to 0 correlation")
        idx = np.asarray(constant, dtype=int)
        matrix[idx, :] = 0.0
        matrix[:, idx] = 0.0
    matrix = np.clip(matrix, -1.0, 1.0)
    upper = np.triu(matrix, k=1)
    matrix = upper + upper.T
    np.fill_diagonal(matrix, 1.0)
    return matrix


def _correlate_columns(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean(axis=0)
    cross = centered.T @ centered
    norms = np.sqrt(np.diag(cross))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cross / np.outer(norms, norms)
    return np.nan_to_num(corr, nan=0.0, posinf=0.0, neginf=0.0)


def spearman_block(data, on_degenerate: OnDegenerate = "raise") -> np.ndarray:
    """Pearson correlation of the column midrank vectors."""
    values = _check_block_data(data, 3, "spearman_block")
    constant = degenerate_columns(values)
    rank_matrix = stats.rankdata(values, method="average", axis=0)
    corr = _correlate_columns(rank_matrix)
    return _handle_degenerate(corr, constant, on_degenerate, "spearman_block")


def pearson_block(data, on_degenerate: OnDegenerate = "raise") -> np.ndarray:
    """Plain sample correlation (Gaussian variant, no sine transform)."""
    values = _check_block_data(data, 3, "pearson_block")
    constant = degenerate_columns(values)
    corr = _correlate_columns(values)
    return _handle_degenerate(corr, constant, on_degenerate, "pearson_block")


def _tie_pairs(column: np.ndarray) -> int:
    _, counts = np.unique(column, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(x, y) -> float:
    """Kendall's tau with tied pairs counted as 0 (no tie correction).

    scipy's O(n log n) routine returns tau-b; the concordant-minus-discordant
    count is an integer, so it is recovered exactly from tau-b and the tie
    counts and rescaled by n(n-1)/2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    n0 = n * (n - 1) // 2
    tx, ty = _tie_pairs(x), _tie_pairs(y)
    if tx == n0 or ty == n0:
        return 0.0
    tau_b = stats.kendalltau(x, y, variant="b")[0]
    if not np.isfinite(tau_b):
        return 0.0
    net = int(round(tau_b * np.sqrt(float(n0 - tx) * float(n0 - ty))))
    return net / n0


def kendall_tau_naive(x, y) -> float:
    """Reference O(n^2) pair enumeration of Kendall's tau (sign(0) = 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    upper = np.triu_indices(n, k=1)
    dx = np.sign(x[:, None] - x[None, :])[upper]
    dy = np.sign(y[:, None] - y[None, :])[upper]
    net = int(np.sum((dx * dy).astype(np.int64)))
    return net / (n * (n - 1) // 2)


def kendall_block(data, on_degenerate: OnDegenerate = "zero") -> np.ndarray:
    values = _check_block_data(data, 2, "kendall_block")
    constant = degenerate_columns(values)
    p_k = values.shape[1]
    tau = np.eye(p_k)
    for j in range(p_k):
        for l in range(j + 1, p_k):
            tau[j, l] = tau[l, j] = kendall_tau(values[:, j], values[:, l])
    return _handle_degenerate(tau, constant, on_degenerate, "kendall_block")


def block_rank_correlation(
    data,
    block_index: int,
    statistic: "Statistic | str",
    on_degenerate: OnDegenerate = "raise",
) -> BlockRankCorrelation:
    statistic = Statistic.parse(statistic)
    values = np.asarray(data, dtype=float)
    constant = degenerate_columns(values) if values.ndim == 2 else ()
    fields = {}
    if statistic is Statistic.RHO:
        fields["rho"] = spearman_block(values, on_degenerate)
    elif statistic is Statistic.TAU:
        fields["tau"] = kendall_block(values, on_degenerate)
    else:
        fields["pearson"] = pearson_block(values, on_degenerate)
    logger.debug(
        f"Block {block_index}: {statistic.value} on {values.shape[0]} rows x "
        f"{values.shape[1]} columns"
    )
    return BlockRankCorrelation(block_index=block_index, degenerate_columns=constant, **fields)


#####################################
# Cross-block combination and transforms
#####################################


def combine_blocks(
    design: BlockDesign,
    per_block: Sequence[BlockRankCorrelation],
    statistic: "Statistic | str",
    weighting: Weighting = "equal",
) -> MaskedCorrelation:
    """Average each pair's statistic over the blocks holding it; O^c stays 0."""
    statistic = Statistic.parse(statistic)
    if len(per_block) != design.K:
        msg = f"expected {design.K} block statistics, got {len(per_block)}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if weighting not in ("equal", "sample_size"):
        msg = f"unknown weighting {weighting!r}"
        logger.error(msg)
        raise CorrelationInputError(msg)

    totals = np.zeros((design.p, design.p))
    weights = np.zeros((design.p, design.p))
    for k, (block, block_stats) in enumerate(zip(design.blocks, per_block)):
        values = block_stats.get(statistic)
        if values.shape != (len(block), len(block)):
            msg = (
                f"block {k} statistic has shape {values.shape}, "
                f"expected {(len(block), len(block))}"
            )
            logger.error(msg)
            raise CorrelationInputError(msg)
        w = float(design.sample_sizes[k]) if weighting == "sample_size" else 1.0
        idx = design.block_array(k)
        totals[np.ix_(idx, idx)] += w * values
        weights[np.ix_(idx, idx)] += w

    combined = np.divide(totals, weights, out=np.zeros_like(totals), where=weights > 0)
    np.fill_diagonal(combined, 1.0)
    return MaskedCorrelation(combined, induced_pair_set(design))


def sine_transform(masked: MaskedCorrelation, statistic: "Statistic | str") -> MaskedCorrelation:
    statistic = Statistic.parse(statistic)
    values = np.array(masked.values)
    if statistic is Statistic.RHO:
        values = 2.0 * np.sin(np.pi * values / 6.0)
    elif statistic is Statistic.TAU:
        values = np.sin(np.pi * values / 2.0)
    values = np.clip(values, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return MaskedCorrelation(values, masked.mask)


#####################################
# Positive-semidefinite repair
#####################################


def _repair_block(sub: np.ndarray, ridge: float) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(sub)
    clipped = (eigvecs * np.maximum(eigvals, ridge)) @ eigvecs.T
    scale = np.sqrt(np.diag(clipped))
    repaired = clipped / np.outer(scale, scale)
    low = float(np.linalg.eigvalsh(repaired)[0])
    if low < ridge and low < 1.0:
        # shrink toward I until the smallest eigenvalue sits at the ridge
        shrink = (ridge - low) / (1.0 - low)
        repaired = (1.0 - shrink) * repaired + shrink * np.eye(sub.shape[0])
    repaired = (repaired + repaired.T) / 2.0
    np.fill_diagonal(repaired, 1.0)
    return repaired


def clip_to_correlation(matrix: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Whole-matrix repair: untouched if its smallest eigenvalue is >= ridge."""
    values = np.asarray(matrix, dtype=float)
    values = (values + values.T) / 2.0
    if float(np.linalg.eigvalsh(values)[0]) >= ridge:
        return values
    logger.debug(f"Clipping a {values.shape[0]}x{values.shape[0]} matrix to ridge {ridge:g}")
    return _repair_block(values, ridge)


def psd_repair(
    masked: MaskedCorrelation,
    design: BlockDesign,
    ridge: float = DEFAULT_RIDGE,
    max_rounds: int = DEFAULT_REPAIR_ROUNDS,
) -> MaskedCorrelation:
    """Clip each indefinite block principal submatrix to smallest eigenvalue >= ridge.

    Blocks that are already positive semidefinite are left untouched.
    Repaired blocks that overlap are averaged on shared pairs and the check
    is repeated.
    Entries on O^c are never touched.
    """
    if not 0.0 <= ridge < 1.0:
        msg = f"ridge must lie in [0, 1), got {ridge}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    values = np.array(masked.values)
    for round_index in range(max_rounds):
        totals = np.zeros_like(values)
        counts = np.zeros_like(values)
        for k in range(design.K):
            idx = design.block_array(k)
            sub = values[np.ix_(idx, idx)]
            if float(np.linalg.eigvalsh(sub)[0]) >= -PSD_TOLERANCE:
                continue
            totals[np.ix_(idx, idx)] += _repair_block(sub, ridge)
            counts[np.ix_(idx, idx)] += 1.0
        if not counts.any():
            break
        logger.debug(f"psd_repair round {round_index + 1}: repaired {int(counts.max())} overlapping block(s)")
        values = np.where(counts > 0, totals / np.maximum(counts, 1.0), values)
    else:
        logger.warning(f"psd_repair stopped after {max_rounds} rounds; some blocks remain indefinite")
    values = np.clip(values, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return MaskedCorrelation(values, masked.mask)


#####################################
# Composite estimate
#####################################


def estimate_masked_correlation(
    design: BlockDesign,
    block_data: Sequence[np.ndarray],
    statistic: "Statistic | str" = Statistic.RHO,
    on_degenerate: OnDegenerate = "raise",
    weighting: Weighting = "equal",
    ridge: Optional[float] = DEFAULT_RIDGE,
) -> MaskedCorrelation:
    """Per-block data (columns in block order) to a repaired correlation on O.

    ridge=None skips the PSD repair step.
    """
    statistic = Statistic.parse(statistic)
    if len(block_data) != design.K:
        msg = f"expected {design.K} block datasets, got {len(block_data)}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    per_block = []
    for k, data in enumerate(block_data):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(design.blocks[k]):
            msg = f"block {k} data has shape {data.shape}, expected {len(design.blocks[k])} columns"
            logger.error(msg)
            raise CorrelationInputError(msg)
        if data.shape[0] != design.sample_sizes[k]:
            msg = f"block {k} has {data.shape[0]} rows but the design says n_k={design.sample_sizes[k]}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        per_block.append(block_rank_correlation(data, k, statistic, on_degenerate))

    combined = combine_blocks(design, per_block, statistic, weighting)
    transformed = sine_transform(combined, statistic)
    logger.info(
        f"Masked {statistic.value} correlation: p={design.p}, K={design.K}, "
        f"|O| off-diagonal={transformed.mask.n_observed_offdiag()}"
    )
    if ridge is None:
        return transformed
    return psd_repair(transformed, design, ridge)


def population_masked_correlation(sigma: np.ndarray, design: BlockDesign) -> MaskedCorrelation:
    """Exact population input: the correlation of sigma, kept on O only."""
    values = np.asarray(sigma, dtype=float)
    scale = np.sqrt(np.diag(values))
    corr = values / np.outer(scale, scale)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return MaskedCorrelation.from_matrix(corr, induced_pair_set(design))
