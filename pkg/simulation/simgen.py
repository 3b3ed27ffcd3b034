"""
simgen.py - synthetic nonparanormal data for graph quilting experiments.

    generate_precision   small-world / chain / block-diagonal precision matrix
    generate_spiked      spiked (approximately low-rank) correlation whose
                         inverse keeps the planted small-world graph
    sample_copula        Gaussian draws pushed through Gamma or Cauchy margins
    assign_blocks        random chain of K overlapping blocks of size o
    simulate_scenario    everything above, one call per replicate

All randomness flows from numpy SeedSequence / Generator objects, so a fixed
seed reproduces every output bit for bit.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

# Import external packages
import networkx as nx
import numpy as np
from scipy import stats

# Import functions from local modules
from quilting.core_types import BlockDesign, EdgeSet, validate_design
from quilting.exceptions import (
    CorrelationInputError,
    DesignValidationError,
    QuiltError,
)
from quilting.madgq import correlation_scale
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

Seed = Union[int, np.random.SeedSequence, np.random.Generator, None]

DEFAULT_WEIGHT_RANGE = (0.2, 0.5)
DEFAULT_DIAGONAL_BOOST = 0.1
DEFAULT_SPIKE_GAP = 10.0
DEFAULT_SPIKE_TRIES = 20
DEFAULT_SAMPLES_PER_BLOCK = 2000

#####################################
# Specs
#####################################


@dataclass(frozen=True)
class GraphSpec:
    p: int
    structure: Literal["small_world", "chain", "block_diagonal"] = "small_world"
    neighbors: int = 2
    rewire_prob: float = 0.1
    block_size: int = 5
    edge_weight_range: tuple[float, float] = DEFAULT_WEIGHT_RANGE
    diagonal_boost: float = DEFAULT_DIAGONAL_BOOST

    def __post_init__(self) -> None:
        problems = []
        if self.p < 2:
            problems.append(f"p must be at least 2, got {self.p}")
        if self.structure not in ("small_world", "chain", "block_diagonal"):
            problems.append(f"unknown structure {self.structure!r}")
        if self.structure == "small_world":
            if self.neighbors < 2 or self.neighbors % 2 or self.neighbors >= self.p:
                problems.append(
                    f"neighbors must be even, >= 2 and < p, got {self.neighbors}"
                )
            if not 0.0 <= self.rewire_prob <= 1.0:
                problems.append(f"rewire_prob must lie in [0, 1], got {self.rewire_prob}")
        if self.structure == "block_diagonal" and self.block_size < 2:
            problems.append(f"block_size must be at least 2, got {self.block_size}")
        lo, hi = self.edge_weight_range
        if not 0 < lo <= hi:
            problems.append(f"edge_weight_range needs 0 < lo <= hi, got {self.edge_weight_range}")
        if self.diagonal_boost <= 0:
            problems.append(f"diagonal_boost must be positive, got {self.diagonal_boost}")
        if problems:
            msg = "; ".join(problems)
            logger.error(msg)
            raise DesignValidationError(msg)


@dataclass(frozen=True)
class MarginalSpec:
    """Copula margin: gaussian, gamma(shape, scale) or cauchy(location, scale)."""

    family: Literal["gaussian", "gamma", "cauchy"] = "gaussian"
    shape: float = 5.0
    scale: float = 1.0
    location: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in ("gaussian", "gamma", "cauchy"):
            msg = f"unknown marginal family {self.family!r}"
            logger.error(msg)
            raise DesignValidationError(msg)
        if self.shape <= 0 or self.scale <= 0:
            msg = f"marginal shape and scale must be positive ({self.shape}, {self.scale})"
            logger.error(msg)
            raise DesignValidationError(msg)

    @classmethod
    def gamma(cls, shape: float = 5.0, scale: float = 1.0) -> "MarginalSpec":
        return cls("gamma", shape=shape, scale=scale)

    @classmethod
    def cauchy(cls, location: float = 0.0, scale: float = 3.0) -> "MarginalSpec":
        return cls("cauchy", scale=scale, location=location)

    def transform(self, z: np.ndarray) -> np.ndarray:
        """F^{-1}(Phi(z)), evaluated on whichever tail keeps precision."""
        z = np.asarray(z, dtype=float)
        if self.family == "gaussian":
            return np.array(z)
        if self.family == "gamma":
            out = np.empty_like(z)
            lower = z <= 0
            out[lower] = stats.gamma.ppf(stats.norm.cdf(z[lower]), self.shape, scale=self.scale)
            out[~lower] = stats.gamma.isf(stats.norm.sf(z[~lower]), self.shape, scale=self.scale)
            return out
        tail = stats.norm.sf(np.abs(z))
        return self.location + self.scale * np.sign(z) / np.tan(np.pi * tail)


@dataclass(frozen=True)
class SpikedSpec:
    """Spiked correlation built on a small-world precision.

    The top `rank` eigenvalues are raised until the rank-th is at least
    `gap` times the next one; `spike_scale` optionally spreads the spikes.
    """

    graph: GraphSpec
    rank: int = 3
    gap: float = DEFAULT_SPIKE_GAP
    spike_scale: Optional[tuple[float, ...]] = None
    max_tries: int = DEFAULT_SPIKE_TRIES

    def __post_init__(self) -> None:
        if self.rank < 1 or self.gap <= 1.0 or self.max_tries < 1:
            msg = f"spiked spec needs rank >= 1, gap > 1, max_tries >= 1 (got {self.rank}, {self.gap}, {self.max_tries})"
            logger.error(msg)
            raise DesignValidationError(msg)
        if self.spike_scale is not None and (
            len(self.spike_scale) != self.rank or min(self.spike_scale) < 1.0
        ):
            msg = "spike_scale needs one factor >= 1 per spike"
            logger.error(msg)
            raise DesignValidationError(msg)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    graph: GraphSpec
    marginal: MarginalSpec = field(default_factory=MarginalSpec)
    K: int = 2
    o: int = 0
    n_per_block: int = DEFAULT_SAMPLES_PER_BLOCK
    covariance: Literal["precision", "spiked"] = "precision"
    spiked_rank: int = 3
    spiked_gap: float = DEFAULT_SPIKE_GAP
    sample_mode: Literal["independent", "shared"] = "independent"

    @property
    def p(self) -> int:
        return self.graph.p


@dataclass(frozen=True, eq=False)
class SimulatedScenario:
    config: ScenarioConfig
    design: BlockDesign
    block_data: tuple[np.ndarray, ...]
    truth: EdgeSet
    sigma: np.ndarray
    theta: Optional[np.ndarray]


#####################################
# Helper Functions
#####################################


def _seed_sequence(seed: Seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def _graph_edges(spec: GraphSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    if spec.structure == "small_world":
        graph = nx.watts_strogatz_graph(
            spec.p, spec.neighbors, spec.rewire_prob, seed=int(rng.integers(2**32))
        )
        return sorted((min(i, j), max(i, j)) for i, j in graph.edges())
    if spec.structure == "chain":
        return [(i, i + 1) for i in range(spec.p - 1)]
    edges = []
    for start in range(0, spec.p, spec.block_size):
        members = range(start, min(start + spec.block_size, spec.p))
        edges.extend((i, j) for i in members for j in members if i < j)
    return edges


def correlation_from_precision(theta: np.ndarray) -> np.ndarray:
    """Correlation matrix of theta^{-1}."""
    return correlation_scale(theta)[1]


#####################################
# Generators
#####################################


def generate_precision(spec: GraphSpec, seed: Seed = None) -> tuple[np.ndarray, EdgeSet]:
    """Diagonally dominant precision with edge magnitudes uniform on [lo, hi], random signs."""
    rng = np.random.default_rng(_seed_sequence(seed))
    edges = _graph_edges(spec, rng)
    lo, hi = spec.edge_weight_range
    theta = np.zeros((spec.p, spec.p))
    if edges:
        rows, cols = np.asarray(edges).T
        weights = rng.uniform(lo, hi, size=len(edges)) * rng.choice([-1.0, 1.0], size=len(edges))
        theta[rows, cols] = weights
        theta[cols, rows] = weights
    np.fill_diagonal(theta, np.abs(theta).sum(axis=1) + spec.diagonal_boost)
    truth = EdgeSet(spec.p, frozenset(edges))
    logger.debug(f"Precision: p={spec.p}, {spec.structure}, {len(truth)} edges")
    return theta, truth


def _spiked_candidate(
    theta: np.ndarray, rank: int, gap: float, spike_scale: Sequence[float]
) -> Optional[np.ndarray]:
    base = correlation_from_precision(theta)
    eigvals, eigvecs = np.linalg.eigh(base)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    boost = 1.0
    for _ in range(40):
        raised = eigvals.copy()
        floor = gap * boost * eigvals[rank]
        raised[:rank] = np.maximum(eigvals[:rank], floor * np.asarray(spike_scale))
        sigma = (eigvecs * raised) @ eigvecs.T
        scale = np.sqrt(np.diag(sigma))
        sigma = sigma / np.outer(scale, scale)
        sigma = (sigma + sigma.T) / 2.0
        np.fill_diagonal(sigma, 1.0)
        check = np.linalg.eigvalsh(sigma)[::-1]
        if check[rank] > 0 and check[rank - 1] / check[rank] >= gap:
            return sigma
        boost *= 1.5
    return None


def generate_spiked(spec: SpikedSpec, seed: Seed = None) -> tuple[np.ndarray, EdgeSet]:
    """Spiked correlation Sigma and the planted graph, checked against Sigma^{-1}.

    A candidate is kept when thresholding |Sigma^{-1}| at half the smallest
    planted edge magnitude gives back exactly the planted edges; otherwise a
    fresh seed stream is tried.
    """
    p = spec.graph.p
    if spec.rank >= p:
        theta, truth = generate_precision(spec.graph, seed)
        return correlation_from_precision(theta), truth

    spike_scale = spec.spike_scale or (1.0,) * spec.rank
    for attempt, child in enumerate(_seed_sequence(seed).spawn(spec.max_tries)):
        theta, truth = generate_precision(spec.graph, child)
        sigma = _spiked_candidate(theta, spec.rank, spec.gap, spike_scale)
        if sigma is None:
            logger.debug(f"Spiked attempt {attempt + 1}: eigen-gap not reached")
            continue
        theta_c = correlation_scale(theta)[0]
        planted = min((abs(theta_c[e]) for e in truth), default=0.0)
        recovered = EdgeSet.from_matrix(np.linalg.inv(sigma), tol=planted / 2.0)
        if recovered == truth:
            logger.debug(f"Spiked covariance accepted on attempt {attempt + 1}")
            return sigma, truth
        logger.debug(
            f"Spiked attempt {attempt + 1}: inverse support differs from the planted graph "
            f"({len(recovered)} vs {len(truth)} edges)"
        )
    msg = f"could not build a spiked covariance with a small-world inverse in {spec.max_tries} tries"
    logger.error(msg)
    raise QuiltError(msg)


def sample_gaussian(sigma: np.ndarray, n: int, seed: Seed = None) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if np.max(np.abs(np.diag(sigma) - 1.0)) > 1e-8:
        msg = "sampling needs a unit-diagonal correlation matrix"
        logger.error(msg)
        raise CorrelationInputError(msg)
    try:
        lower = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        msg = "sampling correlation is not positive definite"
        logger.error(msg)
        raise CorrelationInputError(msg) from None
    rng = np.random.default_rng(_seed_sequence(seed))
    return rng.standard_normal((n, sigma.shape[0])) @ lower.T


def apply_marginals(
    z: np.ndarray, marginals: Union[MarginalSpec, Sequence[MarginalSpec]]
) -> np.ndarray:
    """Column-wise copula transform; one shared spec or one per column."""
    z = np.asarray(z, dtype=float)
    if isinstance(marginals, MarginalSpec):
        return marginals.transform(z)
    if len(marginals) != z.shape[1]:
        msg = f"{len(marginals)} marginal specs for {z.shape[1]} columns"
        logger.error(msg)
        raise CorrelationInputError(msg)
    return np.column_stack([spec.transform(z[:, j]) for j, spec in enumerate(marginals)])


def sample_copula(
    sigma: np.ndarray,
    n: int,
    marginals: Union[MarginalSpec, Sequence[MarginalSpec]],
    seed: Seed = None,
) -> np.ndarray:
    """n rows of a nonparanormal vector with latent correlation sigma."""
    return apply_marginals(sample_gaussian(sigma, n, seed), marginals)


def assign_blocks(
    p: int,
    K: int,
    o: int,
    seed: Seed = None,
    n_per_block: int = DEFAULT_SAMPLES_PER_BLOCK,
    scheme: Literal["random_chain"] = "random_chain",
) -> BlockDesign:
    """K windows of size o along a random permutation, chained with equal overlaps.

    The overlap between consecutive windows is (K o - p) // (K - 1); the
    remainder goes to the earliest overlaps.
    """
    if scheme != "random_chain":
        msg = f"unknown block scheme {scheme!r}"
        logger.error(msg)
        raise DesignValidationError(msg)
    if K < 1 or o < 1 or o > p:
        msg = f"block layout needs K >= 1 and 1 <= o <= p (K={K}, o={o}, p={p})"
        logger.error(msg)
        raise DesignValidationError(msg)
    if K == 1 and o != p:
        msg = f"a single block must hold all {p} variables, got o={o}"
        logger.error(msg)
        raise DesignValidationError(msg)
    if K > 1 and K * o < p + K - 1:
        msg = f"K*o = {K * o} cannot chain-cover p={p} with {K} overlapping blocks"
        logger.error(msg)
        raise DesignValidationError(msg)

    order = np.random.default_rng(_seed_sequence(seed)).permutation(p)
    starts = [0]
    if K > 1:
        total = K * o - p
        base, extra = divmod(total, K - 1)
        overlaps = [base + (1 if g < extra else 0) for g in range(K - 1)]
        for overlap in overlaps:
            starts.append(starts[-1] + o - overlap)
    blocks = tuple(tuple(int(i) for i in order[s : s + o]) for s in starts)
    design = BlockDesign(p, blocks, (n_per_block,) * K)
    report = validate_design(design)
    if not report.passed:
        msg = f"block layout failed validation: {'; '.join(report.problems)}"
        logger.error(msg)
        raise DesignValidationError(msg)
    return design


def simulate_scenario(config: ScenarioConfig, seed: Seed = None) -> SimulatedScenario:
    """Graph, covariance, block design and per-block copula samples for one replicate."""
    graph_seq, design_seq, sample_seq = _seed_sequence(seed).spawn(3)
    if config.covariance == "spiked":
        spec = SpikedSpec(graph=config.graph, rank=config.spiked_rank, gap=config.spiked_gap)
        sigma, truth = generate_spiked(spec, graph_seq)
        theta = None
    else:
        theta, truth = generate_precision(config.graph, graph_seq)
        sigma = correlation_from_precision(theta)

    design = assign_blocks(config.p, config.K, config.o, design_seq, config.n_per_block)
    if config.sample_mode == "shared":
        latent = sample_gaussian(sigma, config.n_per_block, sample_seq)
        full = apply_marginals(latent, config.marginal)
        block_data = tuple(full[:, list(block)] for block in design.blocks)
    else:
        block_data = tuple(
            sample_copula(sigma[np.ix_(block, block)], n_k, config.marginal, child)
            for block, n_k, child in zip(
                design.blocks, design.sample_sizes, sample_seq.spawn(design.K)
            )
        )
    logger.info(
        f"Simulated {config.name}: p={config.p}, K={config.K}, o={config.o}, "
        f"{config.marginal.family} margins, {len(truth)} true edges"
    )
    return SimulatedScenario(
        config=config,
        design=design,
        block_data=block_data,
        truth=truth,
        sigma=sigma,
        theta=theta,
    )
