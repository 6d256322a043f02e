import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpgen.corpus import BOS_ID, EOS_ID, SEP_ID, Vocabulary, extend_vocabulary
from kpgen.decode import (
    Hypothesis, beam_search, decoder_states, dedupe_phrases, extract_phrases, greedy_decode,
    rank_hypotheses, rank_predictions,
)
from kpgen.model import to_base

from conftest import exhaustive_best, small_search_problem, tiny_setup

VOCAB = Vocabulary(["neural", "network", "process", "processing", "graph"])
EXT = extend_vocabulary(VOCAB, ["neural", "zeta", "graph"])
NEURAL, NETWORK, PROCESS, PROCESSING, GRAPH = (VOCAB.id(w) for w in
                                                ["neural", "network", "process", "processing", "graph"])
ZETA = EXT.id("zeta")


class TestExtractPhrases:
    def test_split_and_stop(self):
        toks = [NEURAL, NETWORK, SEP_ID, GRAPH, EOS_ID, PROCESS]
        assert extract_phrases(toks, EXT) == [("neural", "network"), ("graph",)]

    def test_empty_phrases_dropped(self):
        assert extract_phrases([SEP_ID, SEP_ID, GRAPH, SEP_ID, EOS_ID], EXT) == [("graph",)]
        assert extract_phrases([EOS_ID], EXT) == []

    def test_unfinished(self):
        assert extract_phrases(Hypothesis((GRAPH, SEP_ID, NEURAL), -1.0), EXT) == [("graph",), ("neural",)]

    def test_novel_word(self):
        assert ZETA == len(VOCAB)
        assert extract_phrases([ZETA, GRAPH, EOS_ID], EXT) == [("zeta", "graph")]


class TestRanking:
    def test_stem_dedup(self):
        assert dedupe_phrases([("process",), ("processing",), ("graph",)]) == [("process",), ("graph",)]

    @given(st.lists(st.lists(st.sampled_from(["process", "processing", "graph", "graphs", "net"]),
                             min_size=1, max_size=3).map(tuple), max_size=8))
    def test_dedup_idempotent(self, phrases):
        once = dedupe_phrases(phrases)
        assert dedupe_phrases(once) == once
        assert set(once) <= set(phrases)

    def test_pooling_order(self):
        hyps = [
            Hypothesis((GRAPH, SEP_ID, PROCESSING, EOS_ID), -2.0, True),
            Hypothesis((PROCESS, SEP_ID, NEURAL, EOS_ID), -1.0, True),
        ]
        pred = rank_predictions(hyps, EXT)
        assert pred.candidates == [("process",), ("neural",), ("graph",)]
        assert pred.scores == [-1.0, -1.0, -2.0]
        assert pred.top_beam_phrases == [("process",), ("neural",)]

    def test_empty(self):
        pred = rank_predictions([Hypothesis((EOS_ID,), -0.5, True)], EXT)
        assert pred.candidates == [] and pred.top_beam_phrases == []
        assert rank_predictions([], EXT).candidates == []

    def test_tie_break(self):
        a, b = Hypothesis((GRAPH,), -1.0), Hypothesis((NEURAL,), -1.0)
        assert rank_hypotheses([a, b])[0] == (a if a.tokens < b.tokens else b)


class TestBeamSearch:
    def test_beam_one_is_greedy(self):
        for seed in range(5):
            model, ex = small_search_problem(seed, max_len=6)
            hyp = beam_search(model, ex, beam_size=1, max_len=6)[0]
            g = greedy_decode(model, ex, max_len=6)
            assert hyp.tokens == g.tokens
            assert hyp.score == pytest.approx(g.score, abs=1e-12)

    @settings(max_examples=10)
    @given(st.integers(0, 10_000))
    def test_matches_exhaustive(self, seed):
        model, ex = small_search_problem(seed, max_len=3)
        tokens, score = exhaustive_best(model, ex, 3)
        top = beam_search(model, ex, beam_size=6 ** 2, max_len=3)[0]
        assert top.tokens == tokens
        assert top.score == pytest.approx(score, abs=1e-12)

    @settings(max_examples=10)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_narrow_beam_bounded_by_optimum(self, seed, width):
        model, ex = small_search_problem(seed, max_len=3)
        _, best = exhaustive_best(model, ex, 3)
        hyps = beam_search(model, ex, beam_size=width, max_len=3)
        assert hyps[0].score <= best + 1e-12
        assert all(h.score <= 0 for h in hyps)

    def test_results_ranked_and_well_formed(self):
        model, ex = small_search_problem(3, max_len=4)
        hyps = beam_search(model, ex, beam_size=5, max_len=4)
        scores = [h.score for h in hyps]
        assert scores == sorted(scores, reverse=True)
        for h in hyps:
            assert h.finished == (h.tokens[-1] == EOS_ID)
            assert EOS_ID not in h.tokens[:-1]
            assert not set(h.tokens) & {0, 1, BOS_ID}
            assert h.finished or len(h.tokens) == 4

    def test_scores_are_prefix_log_probs(self):
        model, ex = small_search_problem(7, max_len=4)
        _, _, fused = model.encode_document(ex)
        for h in beam_search(model, ex, beam_size=4, max_len=4):
            total = 0.0
            for t, tok in enumerate(h.tokens):
                prefix = np.array([[BOS_ID, *to_base(np.array(h.tokens[:t], dtype=np.int64),
                                                     model.vocab_size)]])
                total += np.log(model.step_distributions(ex, fused, prefix).mixture[0, tok])
            assert h.score == pytest.approx(total, abs=1e-9)

    def test_argument_checks(self):
        model, ex = small_search_problem(0, max_len=4)
        with pytest.raises(ValueError):
            beam_search(model, ex, beam_size=0)
        with pytest.raises(ValueError):
            beam_search(model, ex, max_len=5)


class TestDecoderStates:
    def test_first_step_matches_decode_step(self, toy_docs):
        model, _, exs = tiny_setup(toy_docs)
        _, _, fused = model.encode_document(exs[0])
        s_t, _, _ = model.decode_step(np.array([[BOS_ID]]), fused)
        rows = decoder_states(model, exs[0], steps=1)
        assert rows.shape == (1, model.config.hidden_dim)
        np.testing.assert_allclose(rows[0], s_t[0], atol=1e-15)

    def test_shape_and_determinism(self, toy_docs):
        model, _, exs = tiny_setup(toy_docs)
        a = decoder_states(model, exs[1], steps=3)
        assert a.shape == (3, model.config.hidden_dim)
        np.testing.assert_array_equal(a, decoder_states(model, exs[1], steps=3))
