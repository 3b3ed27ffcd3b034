"""
glasso.py - l1-penalised Gaussian likelihood over precision matrices with
optional hard zero constraints.

    maximise  log det Theta - <S, Theta> - sum_{i != j} Lambda_ij |Theta_ij|
    subject to Theta > 0 and Theta_ij = 0 for (i, j) in the zero constraint

Solved by block coordinate descent over the columns of the working
covariance W = Theta^{-1}. Each column is a lasso over its unconstrained
coordinates; constrained coordinates are pinned to 0 and left out of the
subproblem. The diagonal is not penalised, so W_ii = S_ii throughout.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
from dataclasses import dataclass, field
from typing import Iterable, Optional

# Import external packages
import numpy as np
import scipy.linalg

# Import functions from local modules
from quilting.core_types import (
    BlockDesign,
    MaskedCorrelation,
    Pair,
    PrecisionEstimate,
    canonical_pair,
    constraint_pairs,
    mirror_upper,
)
from quilting.exceptions import ConvergenceError, CorrelationInputError
from utils.utils_logger import logger

#####################################
# Default Configurations
#####################################

DEFAULT_MAX_SWEEPS = 2000
DEFAULT_TOLERANCE = 1e-6
DEFAULT_INNER_TOLERANCE = 1e-10
DEFAULT_INNER_MAX_PASSES = 5000
ZERO_SNAP = 1e-10

#####################################
# Types
#####################################


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Symmetric non-negative off-diagonal penalty; the diagonal is ignored."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = mirror_upper(self.values, "penalty matrix")
        if np.any(values < 0):
            msg = "penalty entries must be non-negative"
            logger.error(msg)
            raise CorrelationInputError(msg)
        np.fill_diagonal(values, 0.0)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @classmethod
    def uniform(cls, p: int, lam: float) -> "PenaltyMatrix":
        return cls(np.full((p, p), float(lam)))

    @classmethod
    def pairwise(cls, design: BlockDesign, c0: float) -> "PenaltyMatrix":
        """Lambda_jl = c0 sqrt(log p / n_jl), n_jl the joint sample size of j and l.

        Pairs never observed together get the smallest-block rate.
        """
        joint = design.joint_sample_sizes()
        joint[joint <= 0] = min(design.sample_sizes)
        return cls(c0 * np.sqrt(np.log(design.p) / joint))

    @classmethod
    def theory(cls, design: BlockDesign, c0: float, alpha: float) -> "PenaltyMatrix":
        """Uniform Lambda = c0 / alpha * sqrt(log p / min_k n_k)."""
        if alpha <= 0:
            msg = f"incoherence alpha must be positive, got {alpha}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        lam = c0 / alpha * np.sqrt(np.log(design.p) / min(design.sample_sizes))
        return cls.uniform(design.p, lam)

    def scaled(self, factor: float) -> "PenaltyMatrix":
        return PenaltyMatrix(self.values * float(factor))

    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = DEFAULT_MAX_SWEEPS
    tolerance: float = DEFAULT_TOLERANCE
    zero_constraint: frozenset[Pair] = field(default_factory=frozenset)
    inner_tolerance: float = DEFAULT_INNER_TOLERANCE

    def __post_init__(self) -> None:
        if self.tolerance <= 0 or self.inner_tolerance <= 0:
            msg = "solver tolerances must be positive"
            logger.error(msg)
            raise CorrelationInputError(msg)
        if self.max_iterations < 1:
            msg = f"max_iterations must be positive, got {self.max_iterations}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        pairs = frozenset(canonical_pair(i, j) for i, j in self.zero_constraint if i != j)
        object.__setattr__(self, "zero_constraint", pairs)


#####################################
# Helper Functions
#####################################


def constraint_matrix(p: int, pairs: Iterable[Pair]) -> np.ndarray:
    constrained = np.zeros((p, p), dtype=bool)
    for i, j in pairs:
        if not (0 <= i < p and 0 <= j < p):
            msg = f"zero constraint ({i}, {j}) outside 0..{p - 1}"
            logger.error(msg)
            raise CorrelationInputError(msg)
        constrained[i, j] = constrained[j, i] = True
    np.fill_diagonal(constrained, False)
    return constrained


def _soft_threshold(value: float, lam: float) -> float:
    if value > lam:
        return value - lam
    if value < -lam:
        return value + lam
    return 0.0


def _lasso_cd(
    gram: np.ndarray,
    target: np.ndarray,
    lam: np.ndarray,
    beta: np.ndarray,
    tol: float,
    max_passes: int = DEFAULT_INNER_MAX_PASSES,
) -> np.ndarray:
    """Minimise 1/2 b'Gb - t'b + sum lam_j |b_j| by cyclic coordinate descent.

    Passes alternate between the active set and a full sweep that confirms it.
    """
    beta = beta.copy()
    fitted = gram @ beta
    diag = np.diag(gram)
    full_pass = True
    for _ in range(max_passes):
        coords = range(beta.size) if full_pass else np.flatnonzero(beta)
        biggest = 0.0
        for j in coords:
            old = beta[j]
            partial = target[j] - fitted[j] + diag[j] * old
            new = _soft_threshold(partial, lam[j]) / diag[j]
            if new != old:
                step = new - old
                fitted += step * gram[:, j]
                beta[j] = new
                biggest = max(biggest, abs(step))
        if biggest < tol:
            if full_pass:
                break
            full_pass = True
        else:
            full_pass = False
    return beta


def _theta_from_columns(W: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Rebuild Theta from the per-column regressions B[:, i] and W."""
    p = W.shape[0]
    theta = np.zeros((p, p))
    for i in range(p):
        rest = np.delete(np.arange(p), i)
        beta = B[rest, i]
        theta_ii = 1.0 / (W[i, i] - W[rest, i] @ beta)
        theta[i, i] = theta_ii
        theta[rest, i] = -beta * theta_ii
    theta = (theta + theta.T) / 2.0
    zero = (B == 0.0) | (B.T == 0.0)
    np.fill_diagonal(zero, False)
    theta[zero] = 0.0
    return theta


def duality_gap(sigma: np.ndarray, theta: np.ndarray, penalty: np.ndarray) -> float:
    """<S, Theta> - p + sum Lambda |Theta| off the diagonal."""
    off = ~np.eye(theta.shape[0], dtype=bool)
    return float(
        np.sum(sigma * theta) - theta.shape[0] + np.sum(penalty[off] * np.abs(theta[off]))
    )


def _validated_sigma(sigma) -> np.ndarray:
    values = mirror_upper(sigma, "input covariance", tol=1e-8)
    if np.any(np.diag(values) <= 0):
        msg = "input covariance must have a strictly positive diagonal"
        logger.error(msg)
        raise CorrelationInputError(msg)
    return values


#####################################
# Solver
#####################################


def solve(
    sigma,
    penalty: PenaltyMatrix,
    options: Optional[SolverOptions] = None,
) -> PrecisionEstimate:
    """Penalised (and optionally zero-constrained) precision estimate.

    Raises ConvergenceError, carrying the last duality gap, when the working
    covariance still moves by more than the tolerance after max_iterations sweeps.
    """
    options = options or SolverOptions()
    S = _validated_sigma(sigma.values if isinstance(sigma, MaskedCorrelation) else sigma)
    p = S.shape[0]
    if penalty.p != p:
        msg = f"penalty is {penalty.p}x{penalty.p} but the covariance is {p}x{p}"
        logger.error(msg)
        raise CorrelationInputError(msg)
    lam = np.asarray(penalty.values)
    constrained = constraint_matrix(p, options.zero_constraint)

    if p == 1 or (penalty.is_zero() and not constrained.any()):
        logger.debug(f"Unpenalised, unconstrained problem (p={p}): inverting directly")
        theta = np.linalg.inv(S) if p > 1 else 1.0 / S
        return PrecisionEstimate.from_theta(theta, snap=ZERO_SNAP)

    W = np.diag(np.diag(S)).astype(float)
    B = np.zeros((p, p))
    trace: list[float] = []
    everything = np.arange(p)

    for sweep in range(1, options.max_iterations + 1):
        W_before = W.copy()
        for i in range(p):
            rest = np.delete(everything, i)
            free = np.flatnonzero(~constrained[rest, i])
            beta = np.zeros(rest.size)
            if free.size:
                W11 = W[np.ix_(rest, rest)]
                gram = W11[np.ix_(free, free)]
                target = S[rest[free], i]
                lam_free = lam[rest[free], i]
                if not np.any(lam_free):
                    beta[free] = scipy.linalg.solve(gram, target, assume_a="pos")
                else:
                    beta[free] = _lasso_cd(
                        gram, target, lam_free, B[rest[free], i], options.inner_tolerance
                    )
                w12 = W11[:, free] @ beta[free]
            else:
                w12 = np.zeros(rest.size)
            W[rest, i] = w12
            W[i, rest] = w12
            B[rest, i] = beta

        change = float(np.max(np.abs(W - W_before)))
        sign, logdet = np.linalg.slogdet(W)
        trace.append(float(logdet) if sign > 0 else float("-inf"))
        if sweep % 50 == 0:
            logger.debug(f"glasso sweep {sweep}: max |dW| = {change:.3e}")
        if change < options.tolerance:
            break
    else:
        theta = _theta_from_columns(W, B)
        gap = duality_gap(S, theta, lam)
        msg = (
            f"glasso did not converge in {options.max_iterations} sweeps "
            f"(last max |dW| = {change:.3e}, duality gap = {gap:.3e})"
        )
        logger.error(msg)
        raise ConvergenceError(msg, duality_gap=gap, sweeps=options.max_iterations)

    theta = _theta_from_columns(W, B)
    theta[constrained] = 0.0
    estimate = PrecisionEstimate.from_theta(theta, snap=ZERO_SNAP, sweeps=sweep, dual_trace=trace)
    logger.debug(
        f"glasso converged in {sweep} sweeps: p={p}, {len(estimate.support)} edges, "
        f"{int(constrained.sum() // 2)} constrained pairs"
    )
    return estimate


def kkt_residual(
    sigma,
    penalty: PenaltyMatrix,
    theta: PrecisionEstimate,
    zero_constraint: Iterable[Pair] = (),
) -> float:
    """Largest violation of the optimality conditions of solve.

    With W = Theta^{-1}: |W_ii - S_ii| on the diagonal; max(0, |S_ij - W_ij| - Lambda_ij)
    where Theta_ij = 0; |W_ij - S_ij - Lambda_ij sign(Theta_ij)| elsewhere.
    Constrained pairs are exempt.
    """
    S = np.asarray(sigma.values if isinstance(sigma, MaskedCorrelation) else sigma, dtype=float)
    values = np.asarray(theta.theta)
    p = values.shape[0]
    lam = np.asarray(penalty.values)
    W = np.linalg.inv(values)
    exempt = constraint_matrix(p, zero_constraint)
    off = ~np.eye(p, dtype=bool) & ~exempt

    residual = float(np.max(np.abs(np.diag(W) - np.diag(S))))
    at_zero = off & (values == 0.0)
    if at_zero.any():
        residual = max(residual, float(np.max(np.maximum(np.abs(S - W) - lam, 0.0)[at_zero])))
    nonzero = off & (values != 0.0)
    if nonzero.any():
        residual = max(
            residual, float(np.max(np.abs(W - S - lam * np.sign(values))[nonzero]))
        )
    return residual


def population_madgq(
    sigma_O: MaskedCorrelation,
    tolerance: float = 1e-10,
    max_iterations: int = 20000,
) -> PrecisionEstimate:
    """Unpenalised solution with Theta fixed to 0 on every unobserved pair."""
    options = SolverOptions(
        max_iterations=max_iterations,
        tolerance=tolerance,
        zero_constraint=constraint_pairs(sigma_O.mask),
    )
    return solve(sigma_O.values, PenaltyMatrix.uniform(sigma_O.p, 0.0), options)
