"""
core_types.py - shared block-design, mask, matrix and edge-set types.

Indices are 0-based everywhere in this package. Conversion to the 1-based
user-facing convention happens only in the CLI file layer
(see BlockDesign.from_one_based / EdgeSet.to_one_based).

All types are immutable after construction: numpy arrays are copied and
marked read-only, tuples and frozensets are used for index collections.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal, Optional, Sequence

# Import external packages
import numpy as np

# Import functions from local modules
from quilting.exceptions import CorrelationInputError, DesignValidationError
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

SYMMETRY_TOL = 1e-12
RANGE_TOL = 1e-12
ZERO_SNAP = 1e-10

Pair = tuple[int, int]
Region = Literal["all", "observed", "unobserved"]

#####################################
# Helper Functions
#####################################


def _read_only(array: np.ndarray) -> np.ndarray:
    frozen = np.array(array, copy=True)
    frozen.setflags(write=False)
    return frozen


def _square(matrix, name: str) -> np.ndarray:
    values = np.asarray(matrix, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        msg = f"{name} must be a square matrix, got shape {values.shape}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if not np.all(np.isfinite(values)):
        msg = f"{name} contains non-finite entries"
        logger.error(msg)
        raise CorrelationInputError(msg)
    return values


def mirror_upper(matrix: np.ndarray, name: str, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Reject asymmetry beyond tol, then rebuild the matrix from its upper triangle."""
    values = _square(matrix, name)
    asymmetry = float(np.max(np.abs(values - values.T))) if values.size else 0.0
    if asymmetry > tol:
        msg = f"{name} is not symmetric (max |A - A^T| = {asymmetry:.3e} > {tol:g})"
        logger.error(msg)
        raise CorrelationInputError(msg)
    upper = np.triu(values)
    return upper + np.triu(values, k=1).T


def canonical_pair(i: int, j: int) -> Pair:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


#####################################
# Block Design
#####################################


@dataclass(frozen=True, eq=False)
class BlockDesign:
    """K partially overlapping variable blocks with their sample sizes.

    Construction enforces the structural rules (nonempty blocks, indices in
    range, no duplicates, positive sample sizes). Coverage and |O| > p are
    checked by validate_design, which reports instead of raising.
    """

    p: int
    blocks: tuple[tuple[int, ...], ...]
    sample_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        p = int(self.p)
        if p < 1:
            raise self._invalid(f"variable count p must be positive, got {self.p}")
        blocks = tuple(tuple(int(i) for i in block) for block in self.blocks)
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not blocks:
            raise self._invalid("a design needs at least one block")
        if len(sizes) != len(blocks):
            raise self._invalid(
                f"{len(blocks)} blocks but {len(sizes)} sample sizes were given"
            )
        for k, block in enumerate(blocks):
            if not block:
                raise self._invalid(f"block {k} is empty")
            out_of_range = [i for i in block if i < 0 or i >= p]
            if out_of_range:
                raise self._invalid(
                    f"block {k} has indices outside 0..{p - 1}: {out_of_range}"
                )
            if len(set(block)) != len(block):
                raise self._invalid(f"block {k} repeats an index")
        bad_sizes = [n for n in sizes if n < 1]
        if bad_sizes:
            raise self._invalid(f"sample sizes must be positive, got {bad_sizes}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "sample_sizes", sizes)

    @staticmethod
    def _invalid(msg: str) -> DesignValidationError:
        logger.error(msg)
        return DesignValidationError(msg)

    @classmethod
    def from_one_based(
        cls, p: int, blocks: Sequence[Sequence[int]], sample_sizes: Sequence[int]
    ) -> "BlockDesign":
        """Build a design from 1-based block indices (file format)."""
        return cls(p, tuple(tuple(int(i) - 1 for i in b) for b in blocks), tuple(sample_sizes))

    def to_one_based(self) -> list[list[int]]:
        return [[i + 1 for i in block] for block in self.blocks]

    @property
    def K(self) -> int:
        return len(self.blocks)

    def block_array(self, k: int) -> np.ndarray:
        return np.asarray(self.blocks[k], dtype=int)

    def covered_nodes(self) -> frozenset[int]:
        return frozenset(i for block in self.blocks for i in block)

    def blocks_containing(self, i: int) -> tuple[int, ...]:
        return tuple(k for k, block in enumerate(self.blocks) if i in block)

    def pair_block_counts(self) -> np.ndarray:
        """counts[i, j] = number of blocks holding both i and j."""
        counts = np.zeros((self.p, self.p), dtype=int)
        for block in self.blocks:
            idx = np.asarray(block, dtype=int)
            counts[np.ix_(idx, idx)] += 1
        return counts

    def joint_sample_sizes(self) -> np.ndarray:
        """n[i, j] = total samples over blocks holding both i and j (0 if none)."""
        totals = np.zeros((self.p, self.p), dtype=float)
        for block, n_k in zip(self.blocks, self.sample_sizes):
            idx = np.asarray(block, dtype=int)
            totals[np.ix_(idx, idx)] += n_k
        return totals

    def with_blocks_reordered(self, order: Sequence[int]) -> "BlockDesign":
        return BlockDesign(
            self.p,
            tuple(self.blocks[k] for k in order),
            tuple(self.sample_sizes[k] for k in order),
        )


@dataclass(frozen=True)
class DesignReport:
    passed: bool
    uncovered: tuple[int, ...]
    observed_pair_count: int
    problems: tuple[str, ...]


#####################################
# Masks, correlations, precisions, edges
#####################################


@dataclass(frozen=True, eq=False)
class PairMask:
    """Symmetric boolean indicator of the jointly observed pairs O."""

    p: int
    observed: np.ndarray

    def __post_init__(self) -> None:
        observed = np.asarray(self.observed, dtype=bool)
        if observed.shape != (self.p, self.p):
            msg = f"mask shape {observed.shape} does not match p={self.p}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        if not np.array_equal(observed, observed.T):
            msg = "pair mask must be symmetric"
            logger.error(msg)
            raise CorrelationInputError(msg)
        if not np.all(np.diag(observed)):
            msg = "pair mask must be true on the diagonal"
            logger.error(msg)
            raise CorrelationInputError(msg)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "observed", _read_only(observed))

    @property
    def unobserved(self) -> np.ndarray:
        return ~self.observed

    def is_observed(self, i: int, j: int) -> bool:
        return bool(self.observed[i, j])

    def observed_pairs(self) -> list[Pair]:
        rows, cols = np.nonzero(np.triu(self.observed, k=1))
        return list(zip(rows.tolist(), cols.tolist()))

    def unobserved_pairs(self) -> list[Pair]:
        rows, cols = np.nonzero(np.triu(~self.observed, k=1))
        return list(zip(rows.tolist(), cols.tolist()))

    def n_observed(self) -> int:
        """|O| as ordered pairs, diagonal included."""
        return int(self.observed.sum())

    def n_observed_offdiag(self) -> int:
        return int(np.triu(self.observed, k=1).sum())

    def n_unobserved(self) -> int:
        return int(np.triu(~self.observed, k=1).sum())


@dataclass(frozen=True, eq=False)
class MaskedCorrelation:
    """Correlation estimate on O, zero-coded on O^c, carried with its mask."""

    values: np.ndarray
    mask: PairMask

    def __post_init__(self) -> None:
        values = mirror_upper(self.values, "correlation matrix")
        if values.shape != (self.mask.p, self.mask.p):
            msg = f"correlation shape {values.shape} does not match mask p={self.mask.p}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        worst = float(np.max(np.abs(values)))
        if worst > 1.0 + RANGE_TOL:
            msg = f"correlation entries must lie in [-1, 1], found |entry| = {worst:.6f}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        diag_gap = float(np.max(np.abs(np.diag(values) - 1.0)))
        if diag_gap > RANGE_TOL:
            msg = f"correlation diagonal must be 1 (max deviation {diag_gap:.3e})"
            logger.error(msg)
            raise CorrelationInputError(msg)
        if np.any(values[self.mask.unobserved] != 0.0):
            msg = "correlation has nonzero entries on unobserved pairs"
            logger.error(msg)
            raise CorrelationInputError(msg)
        values = np.clip(values, -1.0, 1.0)
        np.fill_diagonal(values, 1.0)
        object.__setattr__(self, "values", _read_only(values))

    @classmethod
    def from_matrix(cls, values: np.ndarray, mask: PairMask) -> "MaskedCorrelation":
        """Zero the O^c entries of a full matrix, then validate."""
        masked = np.where(mask.observed, np.asarray(values, dtype=float), 0.0)
        return cls(masked, mask)

    @property
    def p(self) -> int:
        return self.mask.p

    def submatrix(self, block: Sequence[int]) -> np.ndarray:
        idx = np.asarray(block, dtype=int)
        return np.array(self.values[np.ix_(idx, idx)])


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Undirected edges stored canonically as (i, j) with i < j."""

    p: int
    edges: frozenset[Pair] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        canonical = set()
        for i, j in self.edges:
            if i == j:
                msg = f"edge set cannot contain self-loop ({i}, {j})"
                logger.error(msg)
                raise CorrelationInputError(msg)
            if not (0 <= i < self.p and 0 <= j < self.p):
                msg = f"edge ({i}, {j}) outside 0..{self.p - 1}"
                logger.error(msg)
                raise CorrelationInputError(msg)
            canonical.add(canonical_pair(i, j))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "edges", frozenset(canonical))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, tol: float = 0.0) -> "EdgeSet":
        """Edges where |matrix[i, j]| > tol, upper triangle read."""
        values = np.asarray(matrix)
        rows, cols = np.nonzero(np.triu(np.abs(values) > tol, k=1))
        return cls(values.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    @classmethod
    def from_one_based(cls, p: int, pairs: Iterable[Sequence[int]]) -> "EdgeSet":
        return cls(p, frozenset((int(i) - 1, int(j) - 1) for i, j in pairs))

    def to_one_based(self) -> list[Pair]:
        return [(i + 1, j + 1) for i, j in sorted(self.edges)]

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self) -> Iterator[Pair]:
        return iter(sorted(self.edges))

    def __contains__(self, pair: object) -> bool:
        if not isinstance(pair, tuple) or len(pair) != 2:
            return False
        return canonical_pair(*pair) in self.edges

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EdgeSet):
            return NotImplemented
        return self.p == other.p and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.p, self.edges))

    def union(self, other: "EdgeSet") -> "EdgeSet":
        self._check_same_p(other)
        return EdgeSet(self.p, self.edges | other.edges)

    def intersection(self, other: "EdgeSet") -> "EdgeSet":
        self._check_same_p(other)
        return EdgeSet(self.p, self.edges & other.edges)

    def restrict(self, mask: PairMask, region: Region) -> "EdgeSet":
        if region == "all":
            return self
        keep_observed = region == "observed"
        return EdgeSet(
            self.p,
            frozenset(e for e in self.edges if mask.observed[e] == keep_observed),
        )

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def _check_same_p(self, other: "EdgeSet") -> None:
        if self.p != other.p:
            msg = f"edge sets have different dimensions ({self.p} vs {other.p})"
            logger.error(msg)
            raise CorrelationInputError(msg)


@dataclass(frozen=True, eq=False)
class PrecisionEstimate:
    """Symmetric positive-definite precision matrix with its off-diagonal support.

    Entries outside the support are stored as exact zeros.
    """

    theta: np.ndarray
    support: frozenset[Pair]
    sweeps: int = 0
    dual_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        theta = mirror_upper(self.theta, "precision matrix", tol=1e-8)
        try:
            np.linalg.cholesky(theta)
        except np.linalg.LinAlgError:
            msg = "precision matrix is not positive definite"
            logger.error(msg)
            raise CorrelationInputError(msg) from None
        support = frozenset(canonical_pair(i, j) for i, j in self.support)
        offdiag = np.triu(theta != 0.0, k=1)
        rows, cols = np.nonzero(offdiag)
        if set(zip(rows.tolist(), cols.tolist())) != support:
            msg = "support does not match the nonzero off-diagonal entries of theta"
            logger.error(msg)
            raise CorrelationInputError(msg)
        object.__setattr__(self, "theta", _read_only(theta))
        object.__setattr__(self, "support", support)

    @classmethod
    def from_theta(
        cls, theta: np.ndarray, snap: float = ZERO_SNAP, sweeps: int = 0,
        dual_trace: Sequence[float] = (),
    ) -> "PrecisionEstimate":
        """Snap float dust below `snap` to exact zero and derive the support."""
        values = np.array(theta, dtype=float)
        off = ~np.eye(values.shape[0], dtype=bool)
        values[off & (np.abs(values) < snap)] = 0.0
        values = (values + values.T) / 2.0
        rows, cols = np.nonzero(np.triu(values != 0.0, k=1))
        return cls(values, frozenset(zip(rows.tolist(), cols.tolist())), sweeps, tuple(dual_trace))

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    @property
    def edges(self) -> EdgeSet:
        return EdgeSet(self.p, self.support)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.theta)[0])


@dataclass(frozen=True)
class GraphEstimate:
    """A fitted precision matrix and the edge set read from it."""

    theta_hat: PrecisionEstimate
    edges: EdgeSet


#####################################
# Operations
#####################################


def induced_pair_set(design: BlockDesign) -> PairMask:
    """O = {(i, j): some block holds both i and j}; the diagonal is always in O."""
    observed = design.pair_block_counts() > 0
    np.fill_diagonal(observed, True)
    return PairMask(design.p, observed)


def validate_design(design: BlockDesign) -> DesignReport:
    """Check block coverage and |O| > p. Reports problems, never raises."""
    problems: list[str] = []
    uncovered = tuple(sorted(set(range(design.p)) - design.covered_nodes()))
    if uncovered:
        shown = [i + 1 for i in uncovered[:10]]
        problems.append(f"{len(uncovered)} node(s) not covered by any block: {shown}")
    observed_count = induced_pair_set(design).n_observed()
    if observed_count <= design.p:
        problems.append(
            f"|O| = {observed_count} <= p = {design.p}: no off-diagonal pair is observed"
        )
    report = DesignReport(
        passed=not problems,
        uncovered=uncovered,
        observed_pair_count=observed_count,
        problems=tuple(problems),
    )
    for problem in problems:
        logger.warning(f"Design check: {problem}")
    return report


def region_mask(mask: PairMask, region: Region) -> np.ndarray:
    """Upper-triangular boolean selector of the pairs in the requested region."""
    upper = np.triu(np.ones((mask.p, mask.p), dtype=bool), k=1)
    if region == "observed":
        return upper & mask.observed
    if region == "unobserved":
        return upper & mask.unobserved
    return upper


def constraint_pairs(mask: Optional[PairMask]) -> frozenset[Pair]:
    """The O^c pairs of a mask, as a zero-constraint set."""
    if mask is None:
        return frozenset()
    return frozenset(mask.unobserved_pairs())
