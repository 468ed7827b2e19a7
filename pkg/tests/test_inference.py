import math

import numpy as np
import pytest

from docqa.corpus import make_pair
from docqa.inference import (
    AnswerAggregation,
    InferenceError,
    InferenceSpec,
    exhaustive_predict,
    predict,
    score_strings,
)
from docqa.probability import ScoreGrid, SpaceKind, log_partition


def scored_pair(texts, scores_begin, scores_end):
    pair = make_pair("t", "q", texts, ["placeholder"])
    grid = ScoreGrid.zeros([len(p.tokens) for p in pair.paragraphs])
    for k, values in enumerate(scores_begin):
        grid.begin[k][: len(values)] = values
    for k, values in enumerate(scores_end):
        grid.end[k][: len(values)] = values
    return pair, grid


class TestAggregationFlip:
    def build(self):
        # "rome" appears twice with moderate mass, "pisa" once with the most:
        # each rome mention scores 4.6, pisa scores 5.0, and pooled rome mass
        # 2 * e^4.6 beats e^5.0 while a single mention does not.
        pair, grid = scored_pair(
            ["rome beats pisa", "rome again"],
            [[2.3, -5.0, 2.5], [2.3, -5.0]],
            [[2.3, -5.0, 2.5], [2.3, -5.0]],
        )
        return pair, log_partition(grid, SpaceKind.DOCUMENT)

    def test_max_prefers_single_strong_mention(self):
        pair, probs = self.build()
        spec = InferenceSpec(aggregation=AnswerAggregation.MAX, max_answer_length=1)
        assert predict(probs, pair, spec).answer == "pisa"

    def test_sum_pools_repeated_mentions(self):
        pair, probs = self.build()
        spec = InferenceSpec(aggregation=AnswerAggregation.SUM, max_answer_length=1)
        prediction = predict(probs, pair, spec)
        assert prediction.answer == "rome"
        scores = score_strings(probs, pair, AnswerAggregation.SUM, max_answer_length=1)
        np.testing.assert_allclose(prediction.score, scores["rome"], atol=1e-12)
        assert scores["rome"] > scores["pisa"]

    def test_sum_equals_log_of_summed_mention_mass(self):
        pair, probs = self.build()
        sums = score_strings(probs, pair, AnswerAggregation.SUM, max_answer_length=1)
        maxes = score_strings(probs, pair, AnswerAggregation.MAX, max_answer_length=1)
        # rome mentions: (0,0,0) and (1,0,0), identical scores in this grid
        mention = (
            probs.log_begin[0][0] + probs.log_end[0][0]
        )
        np.testing.assert_allclose(sums["rome"], mention + math.log(2.0), atol=1e-12)
        np.testing.assert_allclose(maxes["rome"], mention, atol=1e-12)
        np.testing.assert_allclose(sums["pisa"], maxes["pisa"], atol=1e-12)


class TestWinnerSelection:
    def test_tie_breaks_lexicographically(self):
        pair, grid = scored_pair(["zebra apple"], [[1.0, 1.0]], [[1.0, 1.0]])
        probs = log_partition(grid, SpaceKind.PARAGRAPH)
        spec = InferenceSpec(aggregation=AnswerAggregation.MAX, max_answer_length=1)
        assert predict(probs, pair, spec).answer == "apple"

    def test_support_lists_every_mention_in_order(self):
        pair, grid = scored_pair(
            ["echo delta echo", "echo"],
            [[1.0, 0.0, 1.0], [1.0]],
            [[1.0, 0.0, 1.0], [1.0]],
        )
        probs = log_partition(grid, SpaceKind.DOCUMENT)
        spec = InferenceSpec(aggregation=AnswerAggregation.SUM, max_answer_length=1)
        prediction = predict(probs, pair, spec)
        assert prediction.answer == "echo"
        assert [s.triple() for s in prediction.support] == [(0, 0, 0), (0, 2, 2), (1, 0, 0)]

    def test_normalization_groups_article_variants(self):
        pair, grid = scored_pair(["the lake shore"], [[1.0, 1.0, -9.0]], [[-9.0, 1.0, -9.0]])
        probs = log_partition(grid, SpaceKind.PARAGRAPH)
        spec = InferenceSpec(aggregation=AnswerAggregation.SUM, max_answer_length=2)
        prediction = predict(probs, pair, spec)
        # "the lake" and "lake" pool into one candidate string
        assert prediction.answer == "lake"
        assert {s.triple() for s in prediction.support} == {(0, 0, 1), (0, 1, 1)}

    def test_null_outcome_never_predicted(self):
        pair, grid = scored_pair(["word"], [[-50.0]], [[-50.0]])
        grid.begin[0][1] = 50.0
        grid.end[0][1] = 50.0
        probs = log_partition(grid, SpaceKind.PARAGRAPH)
        prediction = predict(probs, pair, InferenceSpec())
        assert prediction.answer == "word"

    def test_empty_candidates_raise(self):
        pair, grid = scored_pair(["the"], [[0.0]], [[0.0]])
        probs = log_partition(grid, SpaceKind.PARAGRAPH)
        # the lone token normalizes to the empty string
        with pytest.raises(InferenceError):
            predict(probs, pair, InferenceSpec())

    def test_mismatched_grid_raises(self):
        pair, _ = scored_pair(["a b"], [[0.0, 0.0]], [[0.0, 0.0]])
        other_grid = ScoreGrid.zeros([2, 2])
        probs = log_partition(other_grid, SpaceKind.PARAGRAPH)
        with pytest.raises(InferenceError):
            predict(probs, pair, InferenceSpec())


class TestTopKAgainstExhaustive:
    def random_pair(self, rng):
        n_par = int(rng.integers(1, 4))
        counts = [int(rng.integers(1, 8)) for _ in range(n_par)]
        texts = [
            " ".join(f"w{int(rng.integers(0, 5))}" for _ in range(n)) for n in counts
        ]
        pair = make_pair("r", "q", texts, ["w0"])
        grid = ScoreGrid.zeros(counts)
        for arr in grid.begin + grid.end:
            arr[:] = rng.normal(0.0, 2.0, arr.shape)
        return pair, grid

    def test_generous_top_k_matches(self):
        rng = np.random.default_rng(51)
        for _ in range(120):
            pair, grid = self.random_pair(rng)
            space = SpaceKind.PARAGRAPH if rng.random() < 0.5 else SpaceKind.DOCUMENT
            probs = log_partition(grid, space)
            for agg in AnswerAggregation:
                fast = predict(
                    probs,
                    pair,
                    InferenceSpec(aggregation=agg, top_k=10, max_answer_length=3),
                )
                slow = exhaustive_predict(probs, pair, agg, max_answer_length=3)
                assert fast.answer == slow.answer
                np.testing.assert_allclose(fast.score, slow.score, atol=1e-9)

    def test_score_monotone_in_top_k(self):
        rng = np.random.default_rng(52)
        for _ in range(40):
            pair, grid = self.random_pair(rng)
            probs = log_partition(grid, SpaceKind.DOCUMENT)
            last = -np.inf
            for k in (1, 2, 4, 8):
                # a tiny k can leave no begin/end pair forming a legal span
                try:
                    score = predict(
                        probs,
                        pair,
                        InferenceSpec(
                            aggregation=AnswerAggregation.MAX,
                            top_k=k,
                            max_answer_length=3,
                        ),
                    ).score
                except InferenceError:
                    score = -np.inf
                assert score >= last - 1e-12
                last = score

    def test_exhaustive_is_top_k_fixed_point(self):
        rng = np.random.default_rng(53)
        pair, grid = self.random_pair(rng)
        probs = log_partition(grid, SpaceKind.PARAGRAPH)
        big = predict(
            probs,
            pair,
            InferenceSpec(aggregation=AnswerAggregation.SUM, top_k=1000, max_answer_length=8),
        )
        slow = exhaustive_predict(probs, pair, AnswerAggregation.SUM, max_answer_length=8)
        assert big.answer == slow.answer
        np.testing.assert_allclose(big.score, slow.score, atol=1e-12)


class TestLengthCap:
    def test_long_spans_excluded(self):
        pair, grid = scored_pair(
            ["alpha beta gamma"],
            [[5.0, -1.0, -1.0]],
            [[-1.0, -1.0, 5.0]],
        )
        probs = log_partition(grid, SpaceKind.PARAGRAPH)
        capped = predict(
            probs,
            pair,
            InferenceSpec(aggregation=AnswerAggregation.MAX, max_answer_length=2),
        )
        assert capped.answer != "alpha beta gamma"
        uncapped = predict(
            probs,
            pair,
            InferenceSpec(aggregation=AnswerAggregation.MAX, max_answer_length=3),
        )
        assert uncapped.answer == "alpha beta gamma"

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            InferenceSpec(top_k=0)
        with pytest.raises(ValueError):
            InferenceSpec(max_answer_length=0)
        with pytest.raises(ValueError):
            AnswerAggregation.parse("mean")
        assert AnswerAggregation.parse(" SUM ") is AnswerAggregation.SUM
