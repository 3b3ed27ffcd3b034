import numpy as np
import pytest

from quilting.core_types import (
    BlockDesign,
    EdgeSet,
    MaskedCorrelation,
    PairMask,
    PrecisionEstimate,
    constraint_pairs,
    induced_pair_set,
    mirror_upper,
    region_mask,
    validate_design,
)
from quilting.exceptions import CorrelationInputError, DesignValidationError
from tests.builders import chain_design


class TestBlockDesign:
    def test_one_based_round_trip(self):
        design = BlockDesign.from_one_based(5, [[1, 2, 3], [3, 4, 5]], [10, 20])
        assert design.blocks == ((0, 1, 2), (2, 3, 4))
        assert design.to_one_based() == [[1, 2, 3], [3, 4, 5]]
        assert design.K == 2

    def test_rejects_out_of_range_index(self):
        with pytest.raises(DesignValidationError):
            BlockDesign(3, ((0, 1, 3),), (10,))

    def test_rejects_duplicate_index(self):
        with pytest.raises(DesignValidationError):
            BlockDesign(3, ((0, 1, 1),), (10,))

    def test_rejects_mismatched_sample_sizes(self):
        with pytest.raises(DesignValidationError):
            BlockDesign(3, ((0, 1), (1, 2)), (10,))

    def test_joint_sample_sizes_add_over_shared_blocks(self):
        design = BlockDesign(4, ((0, 1, 2), (1, 2, 3)), (10, 30))
        joint = design.joint_sample_sizes()
        assert joint[1, 2] == 40
        assert joint[0, 1] == 10
        assert joint[0, 3] == 0

    def test_blocks_containing(self):
        design = chain_design()
        assert design.blocks_containing(2) == (0, 1)
        assert design.blocks_containing(0) == (0,)


class TestPairSet:
    def test_single_full_block_observes_everything(self):
        mask = induced_pair_set(BlockDesign(4, ((0, 1, 2, 3),), (10,)))
        assert mask.n_unobserved() == 0
        assert mask.n_observed() == 16

    def test_chain_design_unobserved_pairs(self):
        mask = induced_pair_set(chain_design())
        assert mask.unobserved_pairs() == [(0, 4), (0, 5), (1, 4), (1, 5)]
        assert constraint_pairs(mask) == frozenset(mask.unobserved_pairs())

    def test_observed_count_is_monotone_in_blocks(self):
        small = induced_pair_set(BlockDesign(5, ((0, 1, 2), (2, 3, 4)), (5, 5)))
        larger = induced_pair_set(BlockDesign(5, ((0, 1, 2), (2, 3, 4), (0, 4)), (5, 5, 5)))
        assert larger.n_observed() > small.n_observed()

    def test_region_masks_partition_upper_triangle(self):
        mask = induced_pair_set(chain_design())
        observed = region_mask(mask, "observed")
        unobserved = region_mask(mask, "unobserved")
        assert not np.any(observed & unobserved)
        assert np.array_equal(observed | unobserved, region_mask(mask, "all"))

    def test_mask_must_be_symmetric(self):
        observed = np.eye(3, dtype=bool)
        observed[0, 1] = True
        with pytest.raises(CorrelationInputError):
            PairMask(3, observed)


class TestValidateDesign:
    def test_uncovered_node_is_reported_not_raised(self):
        report = validate_design(BlockDesign(4, ((0, 1), (1, 2)), (5, 5)))
        assert not report.passed
        assert report.uncovered == (3,)

    def test_singleton_blocks_have_no_observed_pairs(self):
        report = validate_design(BlockDesign(2, ((0,), (1,)), (5, 5)))
        assert not report.passed
        assert report.observed_pair_count == 2

    def test_chain_design_passes(self):
        assert validate_design(chain_design()).passed


class TestMaskedCorrelation:
    def test_from_matrix_zeroes_unobserved(self):
        mask = induced_pair_set(chain_design())
        full = np.full((6, 6), 0.3)
        np.fill_diagonal(full, 1.0)
        masked = MaskedCorrelation.from_matrix(full, mask)
        assert masked.values[0, 5] == 0.0
        assert masked.values[0, 1] == pytest.approx(0.3)

    def test_rejects_nonzero_on_unobserved(self):
        mask = induced_pair_set(chain_design())
        full = np.full((6, 6), 0.3)
        np.fill_diagonal(full, 1.0)
        with pytest.raises(CorrelationInputError):
            MaskedCorrelation(full, mask)

    def test_rejects_out_of_range(self):
        mask = induced_pair_set(BlockDesign(2, ((0, 1),), (5,)))
        with pytest.raises(CorrelationInputError):
            MaskedCorrelation(np.array([[1.0, 1.5], [1.5, 1.0]]), mask)

    def test_values_are_read_only(self):
        mask = induced_pair_set(BlockDesign(2, ((0, 1),), (5,)))
        masked = MaskedCorrelation(np.array([[1.0, 0.2], [0.2, 1.0]]), mask)
        with pytest.raises(ValueError):
            masked.values[0, 1] = 0.5


class TestEdgeSet:
    def test_pairs_are_canonical(self):
        edges = EdgeSet(4, frozenset({(2, 1), (0, 3)}))
        assert edges.edges == frozenset({(1, 2), (0, 3)})
        assert (2, 1) in edges
        assert list(edges) == [(0, 3), (1, 2)]

    def test_rejects_self_loop(self):
        with pytest.raises(CorrelationInputError):
            EdgeSet(3, frozenset({(1, 1)}))

    def test_restrict_partitions_edges(self):
        mask = induced_pair_set(chain_design())
        edges = EdgeSet(6, frozenset({(0, 1), (0, 5), (2, 3), (1, 4)}))
        observed = edges.restrict(mask, "observed")
        unobserved = edges.restrict(mask, "unobserved")
        assert observed.edges == frozenset({(0, 1), (2, 3)})
        assert unobserved.edges == frozenset({(0, 5), (1, 4)})
        assert observed.union(unobserved) == edges

    def test_from_matrix_reads_upper_triangle(self):
        matrix = np.array([[1.0, 0.0, 0.2], [0.0, 1.0, 1e-12], [0.2, 1e-12, 1.0]])
        assert EdgeSet.from_matrix(matrix, tol=1e-10).edges == frozenset({(0, 2)})

    def test_degrees(self):
        edges = EdgeSet(3, frozenset({(0, 1), (0, 2)}))
        assert edges.degrees().tolist() == [2, 1, 1]


class TestPrecisionEstimate:
    def test_from_theta_snaps_dust(self):
        theta = np.array([[2.0, 1e-12, -0.5], [1e-12, 2.0, 0.0], [-0.5, 0.0, 2.0]])
        estimate = PrecisionEstimate.from_theta(theta)
        assert estimate.support == frozenset({(0, 2)})
        assert estimate.theta[0, 1] == 0.0

    def test_rejects_indefinite(self):
        with pytest.raises(CorrelationInputError):
            PrecisionEstimate.from_theta(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_mirror_upper_rejects_asymmetry():
    with pytest.raises(CorrelationInputError):
        mirror_upper(np.array([[1.0, 0.1], [0.2, 1.0]]), "test matrix")
