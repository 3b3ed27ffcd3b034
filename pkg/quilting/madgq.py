"""
madgq.py - maximum-determinant graph quilting for nonparanormal data.

Steps of run_madgq:

1. masked rank correlation on the observed pairs O
2. penalised likelihood with Theta fixed to 0 on O^c (glasso.solve)
3. observed edges: |Theta_ij| > tau1 for (i, j) in O
4. Schur complement of the estimate for every block
5. nodes whose Schur rows, in every block holding them, have an entry
   strictly between tau2 and tau1
6. unobserved edge superset: O^c restricted to pairs of those nodes

The population side (population_diagnostics, minimal_superset_oracle) runs
the same construction on an exactly known precision matrix and is used to
check the estimator against its guarantees.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass
from typing import Optional, Sequence

# Import external packages
import numpy as np
import scipy.linalg

# Import functions from local modules
from quilting.core_types import (
    BlockDesign,
    EdgeSet,
    MaskedCorrelation,
    PairMask,
    PrecisionEstimate,
    constraint_pairs,
    induced_pair_set,
    region_mask,
)
from quilting.exceptions import CorrelationInputError
from quilting.glasso import PenaltyMatrix, SolverOptions, population_madgq, solve
from quilting.rank_corr import (
    DEFAULT_RIDGE,
    Statistic,
    estimate_masked_correlation,
    population_masked_correlation,
)
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

DEFAULT_TAU1 = 0.05
DEFAULT_TAU1_GRID = (0.02, 0.04, 0.06, 0.1, 0.15)
DEFAULT_TAU2_SCALE = 0.05
POPULATION_DUST = 1e-9

#####################################
# Types
#####################################


@dataclass(frozen=True)
class MadgqThresholds:
    """tau1 selects observed edges; (tau2, tau1) is the distortion window.

    tau2=None means the default c * sqrt(log p / min_k n_k).
    """

    tau1: float
    tau2: Optional[float] = None
    c: float = DEFAULT_TAU2_SCALE

    def __post_init__(self) -> None:
        if self.tau1 <= 0 or self.c <= 0:
            msg = f"tau1 and c must be positive (tau1={self.tau1}, c={self.c})"
            logger.error(msg)
            raise CorrelationInputError(msg)
        if self.tau2 is not None and not 0 < self.tau2 < self.tau1:
            msg = f"thresholds need 0 < tau2 < tau1 (tau2={self.tau2}, tau1={self.tau1})"
            logger.error(msg)
            raise CorrelationInputError(msg)

    def resolve(self, design: BlockDesign) -> "MadgqThresholds":
        if self.tau2 is not None:
            return self
        tau2 = default_tau2(design, self.c)
        return MadgqThresholds(tau1=self.tau1, tau2=tau2, c=self.c)


@dataclass(frozen=True, eq=False)
class QuiltResult:
    edges_O: EdgeSet
    edges_Oc_superset: EdgeSet
    node_set_W: frozenset[int]
    theta_hat: PrecisionEstimate
    schur_complements: tuple[np.ndarray, ...]
    thresholds: MadgqThresholds
    mask: PairMask

    @property
    def edges(self) -> EdgeSet:
        return self.edges_O.union(self.edges_Oc_superset)


@dataclass(frozen=True, eq=False)
class PopulationDiagnostics:
    """Population quantities of a true precision matrix under a block design.

    Everything is on the correlation scale: theta is D^{1/2} Theta D^{1/2}
    with D the diagonal of Theta^{-1}.
    """

    theta: np.ndarray
    sigma: np.ndarray
    theta_tilde: np.ndarray
    schur_tilde: tuple[np.ndarray, ...]
    true_edges: EdgeSet
    edges_O: EdgeSet
    edges_Oc: EdgeSet
    nu: Optional[float]
    delta: float
    psi: float
    d: int
    d_tilde: int
    s_tilde: int
    kappa_tilde: float
    kappa_sigma_tilde: float
    kappa_gamma_tilde: float
    alpha: float

    def exact_recovery_window(self) -> Optional[tuple[float, float]]:
        """(delta, nu - delta) when nonempty, else None."""
        if self.nu is None or self.nu - self.delta <= self.delta:
            return None
        return (self.delta, self.nu - self.delta)


#####################################
# Steps
#####################################


def default_tau2(design: BlockDesign, c: float = DEFAULT_TAU2_SCALE) -> float:
    return float(c * np.sqrt(np.log(design.p) / min(design.sample_sizes)))


def schur_complement(theta, block: Sequence[int]) -> np.ndarray:
    """Theta_AA - Theta_AC Theta_CC^{-1} Theta_CA for A = block, C its complement."""
    values = np.asarray(theta.theta if isinstance(theta, PrecisionEstimate) else theta, dtype=float)
    idx = np.asarray(block, dtype=int)
    if idx.size == 0:
        msg = "schur_complement needs a nonempty block"
        logger.error(msg)
        raise CorrelationInputError(msg)
    rest = np.setdiff1d(np.arange(values.shape[0]), idx)
    inner = values[np.ix_(idx, idx)]
    if rest.size == 0:
        return np.array(inner)
    try:
        correction = values[np.ix_(idx, rest)] @ scipy.linalg.solve(
            values[np.ix_(rest, rest)], values[np.ix_(rest, idx)], assume_a="pos"
        )
    except np.linalg.LinAlgError as e:
        logger.error(f"Schur complement failed: complement block is singular ({e})")
        raise
    result = inner - correction
    return (result + result.T) / 2.0


def threshold_edges_O(theta_hat, mask: PairMask, tau1: float) -> EdgeSet:
    """Observed pairs with |Theta_ij| > tau1 (strict)."""
    values = np.asarray(
        theta_hat.theta if isinstance(theta_hat, PrecisionEstimate) else theta_hat
    )
    selected = region_mask(mask, "observed") & (np.abs(values) > tau1)
    rows, cols = np.nonzero(selected)
    return EdgeSet(mask.p, frozenset(zip(rows.tolist(), cols.tolist())))


def superset_nodes(
    schur_complements: Sequence[np.ndarray],
    design: BlockDesign,
    tau2: float,
    tau1: float,
) -> frozenset[int]:
    """Nodes i such that every block holding i has some j != i with tau2 < |S_ij| < tau1."""
    if not tau2 < tau1:
        msg = f"superset window needs tau2 < tau1 (tau2={tau2}, tau1={tau1})"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if len(schur_complements) != design.K:
        msg = f"expected {design.K} Schur complements, got {len(schur_complements)}"
        logger.error(msg)
        raise CorrelationInputError(msg)

    in_window = []
    for block, schur in zip(design.blocks, schur_complements):
        magnitude = np.abs(np.asarray(schur))
        hit = (magnitude > tau2) & (magnitude < tau1)
        np.fill_diagonal(hit, False)
        in_window.append(dict(zip(block, hit.any(axis=1).tolist())))

    nodes = set()
    for i in range(design.p):
        verdicts = [window[i] for window in in_window if i in window]
        if verdicts and all(verdicts):
            nodes.add(i)
    return frozenset(nodes)


def unobserved_superset(nodes: frozenset[int], mask: PairMask) -> EdgeSet:
    """O^c restricted to pairs with both ends in nodes."""
    return EdgeSet(
        mask.p,
        frozenset((i, j) for i, j in mask.unobserved_pairs() if i in nodes and j in nodes),
    )


def block_schur_complements(theta, design: BlockDesign) -> tuple[np.ndarray, ...]:
    return tuple(schur_complement(theta, block) for block in design.blocks)


def quilt_from_estimate(
    theta_hat: PrecisionEstimate,
    design: BlockDesign,
    thresholds: MadgqThresholds,
    schur_complements: Optional[Sequence[np.ndarray]] = None,
) -> QuiltResult:
    """Threshold a fitted constrained estimate into observed edges and the O^c superset."""
    thresholds = thresholds.resolve(design)
    mask = induced_pair_set(design)
    if schur_complements is None:
        schur_complements = block_schur_complements(theta_hat, design)
    edges_O = threshold_edges_O(theta_hat, mask, thresholds.tau1)
    nodes = superset_nodes(schur_complements, design, thresholds.tau2, thresholds.tau1)
    edges_Oc = unobserved_superset(nodes, mask)
    logger.debug(
        f"MAD_GQ thresholds tau1={thresholds.tau1:.4g}, tau2={thresholds.tau2:.4g}: "
        f"{len(edges_O)} observed edges, {len(nodes)} superset nodes, "
        f"{len(edges_Oc)} unobserved candidate edges"
    )
    return QuiltResult(
        edges_O=edges_O,
        edges_Oc_superset=edges_Oc,
        node_set_W=nodes,
        theta_hat=theta_hat,
        schur_complements=tuple(schur_complements),
        thresholds=thresholds,
        mask=mask,
    )


def fit_constrained(
    masked: MaskedCorrelation,
    penalty: PenaltyMatrix,
    options: Optional[SolverOptions] = None,
) -> PrecisionEstimate:
    """The MAD_GQ likelihood step: solve with Theta fixed to 0 on O^c."""
    options = options or SolverOptions()
    constrained = SolverOptions(
        max_iterations=options.max_iterations,
        tolerance=options.tolerance,
        zero_constraint=constraint_pairs(masked.mask) | options.zero_constraint,
        inner_tolerance=options.inner_tolerance,
    )
    return solve(masked.values, penalty, constrained)


def run_madgq(
    design: BlockDesign,
    penalty: PenaltyMatrix,
    thresholds: MadgqThresholds,
    block_data: Optional[Sequence[np.ndarray]] = None,
    masked: Optional[MaskedCorrelation] = None,
    statistic: "Statistic | str" = Statistic.RHO,
    options: Optional[SolverOptions] = None,
    ridge: Optional[float] = DEFAULT_RIDGE,
) -> QuiltResult:
    """Full MAD_GQ pipeline from per-block data or a ready masked correlation."""
    if (block_data is None) == (masked is None):
        msg = "run_madgq needs exactly one of block_data or masked"
        logger.error(msg)
        raise CorrelationInputError(msg)
    if masked is None:
        masked = estimate_masked_correlation(design, block_data, statistic, ridge=ridge)
    logger.info(f"MAD_GQ: p={design.p}, K={design.K}, tau1={thresholds.tau1:.4g}")
    theta_hat = fit_constrained(masked, penalty, options)
    return quilt_from_estimate(theta_hat, design, thresholds)


#####################################
# Population diagnostics
#####################################


def _snap(values: np.ndarray, dust: float = POPULATION_DUST) -> np.ndarray:
    snapped = np.array(values, dtype=float)
    snapped[np.abs(snapped) < dust] = 0.0
    return snapped


def _max_row_sum(matrix: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(matrix), axis=1)))


def correlation_scale(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Theta_c, Sigma_c) with Sigma_c the correlation matrix of Theta^{-1}."""
    theta = np.asarray(theta, dtype=float)
    sigma = np.linalg.inv(theta)
    scale = np.sqrt(np.diag(sigma))
    sigma_c = sigma / np.outer(scale, scale)
    theta_c = theta * np.outer(scale, scale)
    sigma_c = (sigma_c + sigma_c.T) / 2.0
    np.fill_diagonal(sigma_c, 1.0)
    return (theta_c + theta_c.T) / 2.0, sigma_c


def incoherence(theta_tilde: np.ndarray, sigma_tilde: np.ndarray, mask: PairMask) -> tuple[float, float]:
    """(alpha, |||Gamma_SS^{-1}|||_inf) for Gamma = Sigma~ (x) Sigma~ over ordered pairs."""
    p = theta_tilde.shape[0]
    support = np.flatnonzero((theta_tilde != 0.0).ravel())
    gamma = np.kron(sigma_tilde, sigma_tilde)
    gamma_ss_inv = np.linalg.inv(gamma[np.ix_(support, support)])
    kappa_gamma = _max_row_sum(gamma_ss_inv)
    off = ~np.eye(p, dtype=bool)
    outside = np.flatnonzero((mask.observed & off & (theta_tilde == 0.0)).ravel())
    if outside.size == 0:
        return 1.0, kappa_gamma
    leverage = np.abs(gamma[np.ix_(outside, support)] @ gamma_ss_inv).sum(axis=1)
    return 1.0 - float(np.max(leverage)), kappa_gamma


def population_diagnostics(
    theta_true,
    design: BlockDesign,
    tolerance: float = 1e-10,
) -> PopulationDiagnostics:
    """Exact population quantities for a true precision matrix and a design."""
    theta_c, sigma_c = correlation_scale(np.asarray(theta_true, dtype=float))
    p = design.p
    mask = induced_pair_set(design)
    sigma_O = population_masked_correlation(sigma_c, design)
    theta_tilde = _snap(population_madgq(sigma_O, tolerance=tolerance).theta)
    schur_tilde = tuple(_snap(s) for s in block_schur_complements(theta_tilde, design))

    true_edges = EdgeSet.from_matrix(theta_c, tol=0.0)
    edges_O = true_edges.restrict(mask, "observed")
    edges_Oc = true_edges.restrict(mask, "unobserved")
    nu = min((abs(theta_c[e]) for e in edges_O), default=None)

    observed_off = region_mask(mask, "observed")
    delta = float(np.max(np.abs(theta_c - theta_tilde)[observed_off], initial=0.0))

    candidates = []
    for schur in schur_tilde:
        magnitude = np.abs(schur[~np.eye(schur.shape[0], dtype=bool)])
        inside = magnitude[(magnitude > 0) & (magnitude < delta)]
        candidates.extend(np.minimum(inside, delta - inside).tolist())
    psi = float(min(candidates)) if candidates else float("inf")

    eigvals = np.linalg.eigvalsh(theta_tilde)
    sigma_tilde = np.linalg.inv(theta_tilde)
    alpha, kappa_gamma = incoherence(theta_tilde, sigma_tilde, mask)
    off = ~np.eye(p, dtype=bool)

    diagnostics = PopulationDiagnostics(
        theta=theta_c,
        sigma=sigma_c,
        theta_tilde=theta_tilde,
        schur_tilde=schur_tilde,
        true_edges=true_edges,
        edges_O=edges_O,
        edges_Oc=edges_Oc,
        nu=None if nu is None else float(nu),
        delta=delta,
        psi=psi,
        d=int(np.max(np.sum(theta_c != 0.0, axis=1))),
        d_tilde=int(np.max(np.sum(theta_tilde != 0.0, axis=1))),
        s_tilde=int(np.sum((theta_tilde != 0.0) & off)),
        kappa_tilde=float(eigvals[-1] / eigvals[0]),
        kappa_sigma_tilde=_max_row_sum(sigma_tilde),
        kappa_gamma_tilde=kappa_gamma,
        alpha=alpha,
    )
    logger.info(
        f"Population diagnostics: nu={diagnostics.nu}, delta={delta:.4g}, "
        f"psi={psi:.4g}, alpha={alpha:.4g}"
    )
    return diagnostics


def minimal_superset_oracle(
    diagnostics: PopulationDiagnostics, design: BlockDesign
) -> tuple[frozenset[int], EdgeSet]:
    """Superset nodes and O^c edges from the population Schur complements, window (0, delta)."""
    mask = induced_pair_set(design)
    if diagnostics.delta <= 0:
        return frozenset(), EdgeSet(design.p)
    nodes = superset_nodes(diagnostics.schur_tilde, design, 0.0, diagnostics.delta)
    return nodes, unobserved_superset(nodes, mask)


#####################################
# Numerical inequality checks
#####################################


def _condition_number(matrix: np.ndarray) -> float:
    eigvals = np.linalg.eigvalsh(matrix)
    return float(eigvals[-1] / eigvals[0])


def schur_perturbation_bound(
    x: np.ndarray, y: np.ndarray, block: Sequence[int]
) -> tuple[float, float]:
    """(max-norm gap of the two Schur complements, kappa(X) kappa(Y) ||X - Y||_2)."""
    gap = np.max(np.abs(schur_complement(x, block) - schur_complement(y, block)))
    bound = _condition_number(x) * _condition_number(y) * np.linalg.norm(x - y, 2)
    return float(gap), float(bound)


def spectral_max_norm_bound(x: np.ndarray) -> tuple[float, float]:
    """(||X||_2, min(sqrt(nnz), max row degree) * max |X_ij|) for symmetric X."""
    x = np.asarray(x, dtype=float)
    nonzero = x != 0.0
    degree = int(np.max(np.sum(nonzero, axis=1))) if x.size else 0
    factor = min(np.sqrt(float(nonzero.sum())), float(degree))
    return float(np.linalg.norm(x, 2)), float(factor * np.max(np.abs(x), initial=0.0))
