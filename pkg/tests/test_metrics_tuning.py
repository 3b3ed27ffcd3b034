import itertools

import numpy as np
import pytest

from evaluation.metrics import RecoveryMetrics, compare_edges, metrics_row, region_metrics
from evaluation.tuning import (
    ebic,
    edge_instability,
    match_edge_count,
    select_by_ebic,
    select_tau1_by_stability,
    stability_select,
    tune_f1_oracle,
)
from quilting.core_types import EdgeSet, PrecisionEstimate, induced_pair_set
from quilting.exceptions import CorrelationInputError, QuiltError
from quilting.glasso import PenaltyMatrix
from tests.builders import chain_design


def _edges(p, *pairs):
    return EdgeSet(p, frozenset(pairs))


class TestRecoveryMetrics:
    def test_half_right(self):
        metrics = compare_edges(_edges(4, (0, 1), (0, 2)), _edges(4, (0, 1), (1, 2)))
        assert (metrics.tp, metrics.fp, metrics.fn) == (1, 1, 1)
        assert metrics.tpr == 0.5
        assert metrics.fdp == 0.5
        assert metrics.f1 == 0.5

    def test_empty_conventions(self):
        nothing = RecoveryMetrics(0, 0, 0)
        assert nothing.tpr is None
        assert nothing.fdp == 0.0
        assert nothing.f1 is None
        only_false = RecoveryMetrics(0, 2, 0)
        assert only_false.tpr is None
        assert only_false.fdp == 1.0
        assert only_false.f1 == 0.0

    def test_regions_partition_the_pairs(self):
        mask = induced_pair_set(chain_design())
        truth = _edges(6, (0, 4), (1, 2))
        estimate = _edges(6, (0, 4), (0, 5), (1, 2))
        metrics = region_metrics(estimate, truth, mask)
        assert (metrics["observed"].tp, metrics["observed"].fp) == (1, 0)
        assert (metrics["unobserved"].tp, metrics["unobserved"].fp) == (1, 1)
        assert metrics["all"].tp == metrics["observed"].tp + metrics["unobserved"].tp

    def test_metrics_row_columns(self):
        mask = induced_pair_set(chain_design())
        row = metrics_row(_edges(6, (0, 4), (0, 5)), _edges(6, (0, 4)), mask)
        assert row["n_edges"] == 2
        assert row["fdp_unobserved"] == 0.5
        assert row["tpr_observed"] is None
        assert row["tpr"] == 1.0

    def test_region_needs_mask(self):
        with pytest.raises(CorrelationInputError):
            compare_edges(_edges(3), _edges(3), region="observed")

    def test_dimension_mismatch(self):
        with pytest.raises(CorrelationInputError):
            compare_edges(_edges(3), _edges(4))


class TestF1Oracle:
    def test_ties_prefer_fewer_edges_then_lower_index(self):
        truth = _edges(4, (0, 1), (1, 2))
        outcomes = {
            "a": _edges(4, (0, 1)),
            "b": _edges(4, (0, 1), (1, 2), (0, 3), (2, 3)),
            "d": _edges(4, (0, 1)),
        }

        def runner(value):
            if value == "c":
                raise QuiltError("solver gave up")
            return outcomes[value]

        result = tune_f1_oracle(runner, truth, ["a", "b", "c", "d"])
        assert result.index == 0
        assert result.value == "a"
        assert result.evaluated == 3
        assert result.metrics.f1 == pytest.approx(2 / 3)

    def test_all_failed(self):
        def runner(value):
            raise np.linalg.LinAlgError("singular")

        with pytest.raises(QuiltError):
            tune_f1_oracle(runner, _edges(3), [0.1, 0.2])

    def test_empty_grid(self):
        with pytest.raises(CorrelationInputError):
            tune_f1_oracle(lambda v: _edges(3), _edges(3), [])


class TestEbic:
    def test_hand_value(self):
        theta = np.array([[1.0, 0.5], [0.5, 1.0]])
        expected = -10 * (np.log(0.75) - 2.0) + np.log(10) + 2.0 * np.log(2)
        assert ebic(np.eye(2), theta, 10, gamma=0.5) == pytest.approx(expected)

    def test_gamma_zero_is_bic(self):
        theta = np.array([[1.0, 0.5], [0.5, 1.0]])
        expected = -10 * (np.log(0.75) - 2.0) + np.log(10)
        assert ebic(np.eye(2), theta, 10, gamma=0.0) == pytest.approx(expected)

    def test_penalty_grows_with_gamma(self):
        theta = np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.1], [0.0, 0.1, 1.0]])
        scores = [ebic(np.eye(3), theta, 50, gamma=g) for g in (0.0, 0.25, 0.5, 1.0)]
        assert np.all(np.diff(scores) > 0)

    def test_needs_positive_definite(self):
        with pytest.raises(CorrelationInputError):
            ebic(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]), 10)

    def test_select_prefers_true_sparsity(self):
        sigma = np.array([[1.0, 0.6], [0.6, 1.0]])
        fits = {
            "diagonal": PrecisionEstimate.from_theta(np.eye(2)),
            "inverse": PrecisionEstimate.from_theta(np.linalg.inv(sigma)),
        }
        index, estimate, scores = select_by_ebic(fits.get, sigma, ["diagonal", "inverse"], 500)
        assert index == 1
        assert estimate is fits["inverse"]
        assert len(scores) == 2


class TestStability:
    def test_instability_of_agreeing_sets_is_zero(self):
        edges = _edges(4, (0, 1))
        assert edge_instability([edges, edges, edges]) == 0.0

    def test_instability_of_a_coin_flip_edge(self):
        sets = [_edges(3, (0, 1)), _edges(3)]
        assert edge_instability(sets) == pytest.approx(0.5 / 3)

    def test_keeps_last_stable_value(self, rng):
        data = [rng.standard_normal((40, 3)), rng.standard_normal((40, 3))]
        flips = itertools.count()

        def runner(sample, value):
            assert all(block.shape[0] == 20 for block in sample)
            if value >= 0.3:
                return _edges(3)
            return _edges(3, (0, 1)) if next(flips) % 2 else _edges(3)

        result = stability_select(runner, data, [0.1, 0.3, 0.5], n_subsamples=10, seed=1)
        assert result.value == 0.3
        assert result.grid == (0.5, 0.3, 0.1)
        assert result.instability[-1] == pytest.approx(0.5 / 3)

    def test_unregularised_value_is_never_selected(self, rng):
        data = [rng.standard_normal((40, 4))]
        complete = _edges(4, *itertools.combinations(range(4), 2))

        def runner(sample, value):
            return complete if value == 0.0 else _edges(4)

        result = stability_select(runner, data, [10.0, 0.0], n_subsamples=5, seed=3)
        assert result.value == 10.0
        assert result.instability == (0.0, 0.0)

    def test_saturated_graph_is_never_selected(self, rng):
        data = [rng.standard_normal((40, 3))]

        def runner(sample, value):
            return _edges(3, (0, 1), (0, 2), (1, 2)) if value < 0.2 else _edges(3, (0, 1))

        result = stability_select(runner, data, [0.1, 0.5], n_subsamples=5, seed=3)
        assert result.value == 0.5
        observed_only = stability_select(
            runner, data, [0.1, 0.5], n_subsamples=5, seed=3, saturated_edges=1
        )
        assert observed_only.value == 0.5

    def test_single_grid_point_is_returned(self, rng):
        data = [rng.standard_normal((40, 3))]
        complete = _edges(3, (0, 1), (0, 2), (1, 2))
        result = stability_select(lambda s, v: complete, data, [0.0], n_subsamples=3)
        assert result.value == 0.0

    def test_tau1_selection_keeps_stable_empty_graphs(self, rng):
        design = chain_design(p=6, n=400)
        theta = np.eye(6)
        for i in range(5):
            theta[i, i + 1] = theta[i + 1, i] = 0.45
        sigma = np.linalg.inv(theta)
        d = np.sqrt(np.diag(sigma))
        sigma = sigma / np.outer(d, d)
        full = rng.multivariate_normal(np.zeros(6), sigma, size=400)
        block_data = [full[:, list(block)] for block in design.blocks]
        result = select_tau1_by_stability(
            design,
            block_data,
            PenaltyMatrix.uniform(6, 0.05),
            tau1_grid=[0.001, 3.0, 5.0],
            n_subsamples=6,
            seed=5,
        )
        assert result.grid == (5.0, 3.0)
        assert result.value == 3.0
        assert result.instability == (0.0, 0.0)

    def test_tau1_grid_must_exceed_tau2(self, rng):
        design = chain_design()
        block_data = [rng.standard_normal((200, len(block))) for block in design.blocks]
        with pytest.raises(CorrelationInputError):
            select_tau1_by_stability(
                design, block_data, PenaltyMatrix.uniform(6, 0.1), tau1_grid=[0.01], tau2=0.02
            )

    def test_needs_enough_rows(self, rng):
        with pytest.raises(CorrelationInputError):
            stability_select(lambda s, v: _edges(2), [rng.standard_normal((4, 2))], [0.1])


class TestMatchEdgeCount:
    def test_hits_target(self):
        pairs = list(itertools.combinations(range(10), 2))
        weights = {pair: (k + 1) / 100 for k, pair in enumerate(pairs)}

        def edges_for(tau1):
            return EdgeSet(10, frozenset(pair for pair, w in weights.items() if w > tau1))

        tau1, edges = match_edge_count(edges_for, 20, 1e-3, 1.0)
        assert abs(len(edges) - 20) <= 1
        assert 1e-3 < tau1 < 1.0

    def test_bad_bracket(self):
        with pytest.raises(CorrelationInputError):
            match_edge_count(lambda t: _edges(3), 1, 0.5, 0.1)
