import numpy as np
import pytest

from quilting.core_types import BlockDesign, MaskedCorrelation, induced_pair_set
from quilting.exceptions import CorrelationInputError, MergeUnderdeterminedError
from quilting.glasso import PenaltyMatrix
from quilting.lrgq import (
    LowRankFactor,
    bsvd_complete,
    completion_bic,
    impute,
    run_lrgq,
    spike_floor_estimate,
    zero_impute_baseline,
)
from evaluation.tuning import bic_rank
from simulation.simgen import assign_blocks

NOISE_FLOOR = 0.3


def planted_spiked(rng, p: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact rank-r plus q I correlation: returns (Sigma, C C^T)."""
    C = rng.standard_normal((p, r))
    C *= np.sqrt(1.0 - NOISE_FLOOR) / np.linalg.norm(C, axis=1, keepdims=True)
    low = C @ C.T
    sigma = low + NOISE_FLOOR * np.eye(p)
    return sigma, low


def masked_from(sigma: np.ndarray, design: BlockDesign) -> MaskedCorrelation:
    return MaskedCorrelation.from_matrix(sigma, induced_pair_set(design))


class TestBsvdComplete:
    def test_exact_completion_of_planted_rank(self, rng):
        for seed in range(50):
            r = 1 + seed % 3
            sigma, low = planted_spiked(rng, 30, r)
            design = assign_blocks(30, 3, 14, seed=seed, n_per_block=100)
            masked = masked_from(sigma, design)
            completed, factor = bsvd_complete(masked, design, r, "eigen_median")
            assert factor.q_hat == pytest.approx(NOISE_FLOOR, abs=1e-10)
            unobserved = masked.mask.unobserved
            assert np.max(np.abs(completed - low)[unobserved]) <= 1e-6

    def test_underdetermined_overlap_raises(self, rng):
        sigma, _ = planted_spiked(rng, 7, 2)
        design = BlockDesign(7, ((0, 1, 2, 3), (3, 4, 5, 6)), (50, 50))
        with pytest.raises(MergeUnderdeterminedError) as info:
            bsvd_complete(masked_from(sigma, design), design, 2)
        assert info.value.block == 1
        assert info.value.overlap == 1

    def test_rank_must_be_positive(self, rng):
        sigma, _ = planted_spiked(rng, 6, 1)
        design = BlockDesign(6, ((0, 1, 2, 3), (2, 3, 4, 5)), (50, 50))
        with pytest.raises(CorrelationInputError):
            bsvd_complete(masked_from(sigma, design), design, 0)

    def test_diagonal_median_floor(self, rng):
        sigma, _ = planted_spiked(rng, 6, 1)
        design = BlockDesign(6, ((0, 1, 2, 3), (2, 3, 4, 5)), (50, 50))
        assert spike_floor_estimate(masked_from(sigma, design), design, "diagonal_median") == 1.0

    def test_default_floor_is_the_diagonal_median(self, rng):
        sigma, _ = planted_spiked(rng, 10, 2)
        design = BlockDesign(10, (tuple(range(10)),), (100,))
        completed, factor = bsvd_complete(masked_from(sigma, design), design, 2)
        assert factor.q_hat == pytest.approx(1.0)
        eigvals, eigvecs = np.linalg.eigh(sigma - np.eye(10))
        top = eigvecs[:, -2:] * np.maximum(eigvals[-2:], 0.0)
        np.testing.assert_allclose(completed, top @ eigvecs[:, -2:].T, atol=1e-10)

    def test_reversed_block_order_agrees_on_exact_rank(self, rng):
        sigma, low = planted_spiked(rng, 30, 2)
        design = assign_blocks(30, 3, 14, seed=2, n_per_block=100)
        reversed_design = design.with_blocks_reordered([2, 1, 0])
        forward, _ = bsvd_complete(masked_from(sigma, design), design, 2, "eigen_median")
        backward, _ = bsvd_complete(
            masked_from(sigma, reversed_design), reversed_design, 2, "eigen_median"
        )
        np.testing.assert_allclose(forward, backward, atol=1e-8)
        np.testing.assert_allclose(forward, low, atol=1e-6)

    def test_rotated_factor_gives_the_same_completion(self, rng):
        C = rng.standard_normal((24, 2))
        C *= np.sqrt(1.0 - NOISE_FLOOR) / np.linalg.norm(C, axis=1, keepdims=True)
        Q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        design = assign_blocks(24, 2, 16, seed=4, n_per_block=100)
        completions = []
        for factor in (C, C @ Q):
            sigma = factor @ factor.T + NOISE_FLOOR * np.eye(24)
            completed, _ = bsvd_complete(masked_from(sigma, design), design, 2, "eigen_median")
            completions.append(completed)
        np.testing.assert_allclose(completions[0], completions[1], atol=1e-10)


class TestImpute:
    def test_planted_matrix_is_restored(self, rng):
        sigma, _ = planted_spiked(rng, 20, 2)
        design = assign_blocks(20, 2, 14, seed=7, n_per_block=100)
        masked = masked_from(sigma, design)
        _, factor = bsvd_complete(masked, design, 2, "eigen_median")
        np.testing.assert_allclose(impute(masked, factor), sigma, atol=1e-6)

    def test_keeps_observed_entries(self, rng):
        sigma, _ = planted_spiked(rng, 12, 1)
        noisy = sigma + 0.01 * (np.ones((12, 12)) - np.eye(12))
        design = assign_blocks(12, 2, 8, seed=3, n_per_block=100)
        masked = masked_from(noisy, design)
        _, factor = bsvd_complete(masked, design, 1)
        full = impute(masked, factor, ridge=None)
        observed = masked.mask.observed
        np.testing.assert_allclose(full[observed], masked.values[observed])
        np.testing.assert_allclose(np.diag(full), 1.0)

    def test_spike_diagonal_gives_unit_diagonal(self):
        factor = LowRankFactor(C=np.array([[0.6], [0.3], [0.1]]), q_hat=0.5)
        design = BlockDesign(3, ((0, 1), (1, 2)), (10, 10))
        masked = masked_from(np.eye(3), design)
        full = impute(masked, factor, diagonal="spike", keep_observed=False, ridge=None)
        np.testing.assert_allclose(np.diag(full), 1.0)

    def test_unknown_diagonal_mode(self):
        factor = LowRankFactor(C=np.ones((2, 1)) * 0.5, q_hat=0.75)
        design = BlockDesign(2, ((0, 1),), (10,))
        masked = masked_from(np.eye(2), design)
        with pytest.raises(CorrelationInputError):
            impute(masked, factor, diagonal="wide")


class TestRankSelection:
    @pytest.mark.parametrize("r0", [1, 2, 3])
    def test_bic_selects_planted_rank(self, rng, r0):
        sigma, _ = planted_spiked(rng, 30, r0)
        design = assign_blocks(30, 3, 14, seed=r0, n_per_block=100)
        assert bic_rank(masked_from(sigma, design), design, [1, 2, 3, 4, 5], "eigen_median") == r0

    def test_single_rank_grid(self, rng):
        sigma, _ = planted_spiked(rng, 20, 2)
        design = assign_blocks(20, 2, 14, seed=1, n_per_block=100)
        assert bic_rank(masked_from(sigma, design), design, [1]) == 1

    def test_infeasible_rank_is_skipped(self, rng):
        sigma, _ = planted_spiked(rng, 7, 1)
        design = BlockDesign(7, ((0, 1, 2, 3), (3, 4, 5, 6)), (50, 50))
        assert completion_bic(masked_from(sigma, design), design, 2) is None
        assert bic_rank(masked_from(sigma, design), design, [1, 2]) == 1


class TestPipelines:
    def test_lrgq_on_planted_input(self, rng):
        sigma, _ = planted_spiked(rng, 20, 2)
        design = assign_blocks(20, 2, 14, seed=11, n_per_block=100)
        result = run_lrgq(design, 2, PenaltyMatrix.uniform(20, 0.05), masked=masked_from(sigma, design))
        assert result.factor.rank == 2
        assert result.theta_hat.min_eigenvalue() > 0
        np.testing.assert_allclose(np.diag(result.imputed), 1.0)

    def test_lrgq_needs_one_input(self):
        design = BlockDesign(2, ((0, 1),), (10,))
        with pytest.raises(CorrelationInputError):
            run_lrgq(design, 1, PenaltyMatrix.uniform(2, 0.1))

    def test_zero_impute_baseline(self, rng):
        sigma, _ = planted_spiked(rng, 12, 1)
        design = assign_blocks(12, 2, 8, seed=5, n_per_block=100)
        masked = masked_from(sigma, design)
        estimate = zero_impute_baseline(masked, PenaltyMatrix.uniform(12, 0.05))
        assert estimate.theta_hat.min_eigenvalue() > 0
        empty = zero_impute_baseline(masked, PenaltyMatrix.uniform(12, 0.8))
        assert len(empty.edges) == 0

    def test_zero_impute_puts_no_edge_across_blocks(self):
        design = BlockDesign(5, ((0, 1, 2), (2, 3, 4)), (100, 100))
        sigma = np.eye(5)
        sigma[0, 1] = sigma[1, 0] = 0.5
        sigma[3, 4] = sigma[4, 3] = 0.5
        for i, j in ((0, 2), (1, 2), (2, 3), (2, 4)):
            sigma[i, j] = sigma[j, i] = 0.02
        masked = masked_from(sigma, design)
        estimate = zero_impute_baseline(masked, PenaltyMatrix.uniform(5, 0.1))
        assert estimate.edges.edges == frozenset({(0, 1), (3, 4)})
        unobserved = masked.mask.unobserved
        assert np.all(estimate.theta_hat.theta[unobserved] == 0.0)
