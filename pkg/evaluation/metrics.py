"""
metrics.py - edge recovery counts and rates against a known graph.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass
from typing import Optional

# Import functions from local modules
from quilting.core_types import EdgeSet, PairMask, Region
from quilting.exceptions import CorrelationInputError
from utils.utils_logger import logger

REGIONS: tuple[Region, ...] = ("all", "observed", "unobserved")

#####################################
# Types
#####################################


@dataclass(frozen=True)
class RecoveryMetrics:
    """Counts over unordered pairs; rates derived from them.

    tpr is None when the truth has no edges. fdp is 0 with no discoveries.
    f1 is None when there is nothing to score (no true and no estimated edges).
    """

    tp: int
    fp: int
    fn: int

    @property
    def tpr(self) -> Optional[float]:
        positives = self.tp + self.fn
        return self.tp / positives if positives else None

    @property
    def fdp(self) -> float:
        return self.fp / max(self.tp + self.fp, 1)

    @property
    def f1(self) -> Optional[float]:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denominator if denominator else None

    @property
    def n_estimated(self) -> int:
        return self.tp + self.fp

    def as_row(self, suffix: str = "") -> dict[str, Optional[float]]:
        return {
            f"tpr{suffix}": self.tpr,
            f"fdp{suffix}": self.fdp,
            f"f1{suffix}": self.f1,
            f"tp{suffix}": self.tp,
            f"fp{suffix}": self.fp,
            f"fn{suffix}": self.fn,
        }


#####################################
# Operations
#####################################


def compare_edges(
    estimate: EdgeSet,
    truth: EdgeSet,
    restrict: Optional[PairMask] = None,
    region: Region = "all",
) -> RecoveryMetrics:
    """TP/FP/FN of estimate vs truth, optionally within O or O^c of restrict."""
    if estimate.p != truth.p:
        msg = f"cannot compare edge sets of dimension {estimate.p} and {truth.p}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if region != "all":
        if restrict is None:
            msg = f"region {region!r} needs a pair mask"
            logger.error(msg)
            raise CorrelationInputError(msg)
        estimate = estimate.restrict(restrict, region)
        truth = truth.restrict(restrict, region)
    tp = len(estimate.edges & truth.edges)
    return RecoveryMetrics(
        tp=tp,
        fp=len(estimate.edges) - tp,
        fn=len(truth.edges) - tp,
    )


def region_metrics(estimate: EdgeSet, truth: EdgeSet, mask: PairMask) -> dict[str, RecoveryMetrics]:
    """Metrics over all pairs, over O and over O^c."""
    return {region: compare_edges(estimate, truth, mask, region) for region in REGIONS}


def metrics_row(estimate: EdgeSet, truth: EdgeSet, mask: PairMask) -> dict[str, Optional[float]]:
    """Flat record: headline all-pairs columns plus _observed / _unobserved columns."""
    row: dict[str, Optional[float]] = {"n_edges": len(estimate)}
    for region, metrics in region_metrics(estimate, truth, mask).items():
        row.update(metrics.as_row("" if region == "all" else f"_{region}"))
    return row
