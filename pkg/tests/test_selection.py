import itertools

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from smartsel.errors import DimensionError
from smartsel.selection import (
    FrameScores,
    SelectionResult,
    baseline_random,
    baseline_uniform,
    combine_scores,
    select_top_n,
    top_n_indices,
)


def _scores(delta, gamma):
    return combine_scores(np.array(delta), np.array(gamma))


class TestCombineScores:
    def test_delta_near_one_passes_gamma_through(self):
        top = np.nextafter(1.0, 0.0)
        s = _scores([top, top], [0.4, 0.25])
        npt.assert_allclose(s.combined, [0.4, 0.25], rtol=1e-12)

    def test_vanishing_gamma_dominates_product(self):
        s = _scores([0.9, 0.9], [1e-300, 0.5])
        assert s.combined[0] < 1e-299
        npt.assert_allclose(s.combined[1], 0.45)

    def test_hand_product(self):
        s = _scores([0.5, 0.8], [0.4, 0.25])
        npt.assert_allclose(s.combined, [0.2, 0.2])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            combine_scores(np.array([0.5]), np.array([0.5, 0.5]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            _scores([0.0, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            _scores([1.0, 0.5], [0.5, 0.5])

    def test_combined_must_be_exact_product(self):
        with pytest.raises(ValueError, match="exactly"):
            FrameScores(delta=np.array([0.5]), gamma=np.array([0.5]),
                        combined=np.array([0.26]))


def _enumeration_oracle(values, n):
    """Exhaustive subset oracle: lexicographically first max-sum subset.

    itertools.combinations yields index sets in lexicographic order, so
    keeping the first strictly-larger sum reproduces lower-index
    tie-breaking.  Scores are dyadic so sums are exact in float64.
    """
    best, best_sum = None, -np.inf
    for combo in itertools.combinations(range(len(values)), min(n, len(values))):
        total = sum(values[i] for i in combo)
        if total > best_sum:
            best, best_sum = combo, total
    return best


class TestSelectTopN:
    def test_all_equal_scores_tie_break_to_lowest_indices(self):
        s = _scores([0.5] * 10, [0.5] * 10)
        assert select_top_n(s, 3).indices == (0, 1, 2)

    def test_budget_covers_everything(self):
        s = _scores([0.2, 0.9, 0.5], [0.5, 0.5, 0.5])
        result = select_top_n(s, 7)
        assert result.indices == (0, 1, 2)
        assert result.budget == 7

    def test_matches_enumeration_oracle_on_100_random_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            n_frames = int(rng.integers(1, 13))
            budget = int(rng.integers(1, n_frames + 3))
            # dyadic grid in (0,1) with deliberate duplicates for tie coverage
            values = rng.integers(1, 64, size=n_frames) / 64.0
            assert top_n_indices(values, budget) == tuple(
                sorted(_enumeration_oracle(values, budget))
            )

    def test_strategy_and_budget_recorded(self):
        s = _scores([0.4, 0.6], [0.5, 0.5])
        result = select_top_n(s, 1)
        assert result.strategy == "smart"
        assert result.indices == (1,)

    @given(st.lists(st.integers(1, 1023), min_size=1, max_size=16),
           st.integers(1, 16), st.sampled_from([0.25, 0.5, 2.0, 4.0]))
    def test_scale_invariance(self, grid, n, factor):
        values = np.array(grid) / 1024.0
        assert top_n_indices(values, n) == top_n_indices(values * factor, n)

    @given(st.lists(st.integers(1, 1023), min_size=2, max_size=12),
           st.integers(1, 12), st.data())
    def test_monotonicity_raising_a_selected_score_keeps_it(self, grid, n, data):
        values = np.array(grid) / 1024.0
        chosen = top_n_indices(values, n)
        idx = data.draw(st.sampled_from(chosen))
        boosted = values.copy()
        boosted[idx] += 0.5
        assert idx in top_n_indices(boosted, n)


class TestBaselineUniform:
    def test_even_spacing(self):
        assert baseline_uniform(10, 5).indices == (0, 2, 4, 6, 8)

    def test_full_budget(self):
        assert baseline_uniform(6, 6).indices == tuple(range(6))

    def test_floor_formula(self):
        assert baseline_uniform(7, 3).indices == (0, 2, 4)

    def test_over_budget_returns_all(self):
        assert baseline_uniform(4, 9).indices == (0, 1, 2, 3)

    @given(st.integers(1, 40), st.integers(1, 50))
    def test_always_min_n_frames_distinct_sorted(self, n_frames, n):
        result = baseline_uniform(n_frames, n)
        assert len(result.indices) == min(n, n_frames)
        assert list(result.indices) == sorted(set(result.indices))
        assert all(0 <= i < n_frames for i in result.indices)


class TestBaselineRandom:
    def test_over_budget_returns_all(self):
        assert baseline_random(5, 9, seed=0).indices == (0, 1, 2, 3, 4)

    def test_same_seed_same_result(self):
        assert baseline_random(30, 7, seed=4).indices == baseline_random(30, 7, seed=4).indices

    def test_empirically_uniform(self):
        counts = np.zeros(5)
        for seed in range(10_000):
            counts[baseline_random(5, 1, seed=seed).indices[0]] += 1
        assert chisquare(counts).pvalue > 0.01

    @given(st.integers(1, 30), st.integers(1, 40), st.integers(0, 10_000))
    def test_distinct_sorted_in_range(self, n_frames, n, seed):
        result = baseline_random(n_frames, n, seed)
        assert len(result.indices) == min(n, n_frames)
        assert list(result.indices) == sorted(set(result.indices))
        assert all(0 <= i < n_frames for i in result.indices)


class TestSelectionResult:
    def test_serialization_line(self):
        result = SelectionResult(indices=(0, 3, 9), strategy="smart", budget=3)
        assert result.to_line("vid-7") == "vid-7\tsmart\t3\t0,3,9"

    def test_rejects_unsorted_or_duplicate(self):
        with pytest.raises(ValueError):
            SelectionResult(indices=(3, 0), strategy="smart", budget=2)
        with pytest.raises(ValueError):
            SelectionResult(indices=(1, 1), strategy="smart", budget=2)
