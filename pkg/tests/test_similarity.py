"""Rarity-weighted similarity scoring and retrieval."""

import numpy as np
import pytest

from relsynth.errors import DataValidationError
from relsynth.similarity import (
    build_index,
    scores_against,
    similarity_score,
    top_n_similar,
)
from relsynth.toyset import encoded_from_codes


def index_from(codes, domains, histograms=None, zero_cap=None):
    codes = np.asarray(codes)
    names = [f"c{i}" for i in range(codes.shape[1])]
    encoded = encoded_from_codes(codes, names, domains)
    ids = [f"e{i}" for i in range(codes.shape[0])]
    if histograms is not None:
        histograms = {names[i]: np.asarray(h, float) for i, h in enumerate(histograms)}
    return build_index(encoded, ids, histograms=histograms, zero_cap=zero_cap)


class TestScore:
    def test_pinned_example_sixteen(self):
        # three agreeing columns with marginals 1/2, 1/4, 1/10 -> 2 + 4 + 10
        idx = index_from(
            [[0, 0, 0]],
            domains=[2, 4, 10],
            histograms=[[0.5, 0.5], [0.25, 0.25, 0.25, 0.25], [0.1] * 10],
        )
        a = np.array([0, 0, 0])
        assert similarity_score(a, a, idx) == pytest.approx(16.0)

    def test_disagreeing_columns_contribute_nothing(self):
        idx = index_from(
            [[0, 0]],
            domains=[2, 2],
            histograms=[[0.5, 0.5], [0.25, 0.75]],
        )
        assert similarity_score(np.array([0, 0]), np.array([0, 1]), idx) == pytest.approx(2.0)
        assert similarity_score(np.array([1, 1]), np.array([0, 0]), idx) == pytest.approx(0.0)

    def test_zero_probability_value_uses_cap(self):
        idx = index_from(
            [[0]],
            domains=[3],
            histograms=[[0.5, 0.5, 0.0]],  # value 2 never observed
            zero_cap=123.0,
        )
        assert similarity_score(np.array([2]), np.array([2]), idx) == pytest.approx(123.0)

    def test_default_zero_cap_is_twice_train_size(self):
        codes = np.zeros((25, 1), dtype=int)
        idx = index_from(codes, domains=[2])
        assert idx.zero_cap == 50.0
        # value 1 never occurs -> weight = cap
        assert similarity_score(np.array([1]), np.array([1]), idx) == pytest.approx(50.0)

    def test_row_width_checked(self):
        idx = index_from([[0, 0]], domains=[2, 2])
        with pytest.raises(DataValidationError):
            similarity_score(np.array([0]), np.array([0, 0]), idx)


class TestRetrieval:
    def test_scores_against_matches_pointwise(self):
        rng = np.random.default_rng(0)
        codes = rng.integers(0, 4, size=(40, 3))
        idx = index_from(codes, domains=[4, 4, 4])
        cond = rng.integers(0, 4, size=3)
        batch = scores_against(cond, idx)
        for i in range(40):
            assert batch[i] == pytest.approx(similarity_score(cond, codes[i], idx))

    def test_ties_break_toward_lower_row_index(self):
        codes = np.array([[0], [1], [0], [0]])
        idx = index_from(codes, domains=[2], histograms=[[0.75, 0.25]])
        top = top_n_similar(np.array([0]), idx, 3)
        assert top == ["e0", "e2", "e3"]

    def test_n_bounds(self):
        idx = index_from([[0], [1]], domains=[2])
        with pytest.raises(ValueError):
            top_n_similar(np.array([0]), idx, 0)
        with pytest.raises(ValueError):
            top_n_similar(np.array([0]), idx, 3)

    def test_descending_score_order(self, toy_index, toy_net):
        cond = toy_net.sample(1, seed=9)[0]
        top = top_n_similar(cond, toy_index, 10)
        scores = scores_against(cond, toy_index)
        by_id = dict(zip(toy_index.entity_ids, scores))
        values = [by_id[e] for e in top]
        assert values == sorted(values, reverse=True)

    def test_cost_counter_counts_row_comparisons(self):
        codes = np.zeros((30, 2), dtype=int)
        idx = index_from(codes, domains=[2, 2])
        assert idx.score_evaluations == 0
        top_n_similar(np.array([0, 0]), idx, 5)
        assert idx.score_evaluations == 30  # one linear scan, no re-scoring
