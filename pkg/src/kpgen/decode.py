"""Beam search over the copy/generate mixture, phrase extraction and ranking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import BOS_ID, EOS_ID, SEP_ID, ExtendedVocabulary
from .model import Example, KeyphraseGenerator, to_base
from .porter import stem_phrase


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]   # extended ids after BOS
    score: float              # sum of log mixture probabilities
    finished: bool = False


@dataclass
class PredictionSet:
    candidates: list[tuple[str, ...]] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    top_beam_phrases: list[tuple[str, ...]] = field(default_factory=list)


def _prefixes(hyps: Sequence[Hypothesis], vocab_size: int) -> np.ndarray:
    rows = np.full((len(hyps), 1 + len(hyps[0].tokens)), BOS_ID, dtype=np.int64)
    for i, hyp in enumerate(hyps):
        rows[i, 1:] = hyp.tokens
    rows[:, 1:] = to_base(rows[:, 1:], vocab_size)
    return rows


def beam_search(model: KeyphraseGenerator, ex: Example, beam_size: int = 50,
                max_len: int = 40, disable_memory: bool = False,
                disable_copy: bool = False) -> list[Hypothesis]:
    """Hypotheses ranked by raw log-probability (no length normalization).

    Each step keeps the ``beam_size`` best expansions; those ending in EOS
    leave the beam as finished. Survivors still open at ``max_len`` are
    returned unfinished. Score ties go to the earlier parent, then the lower
    token id.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if max_len > model.config.max_target_len:
        raise ValueError("max_len exceeds the model's max_target_len")
    _, _, fused = model.encode_document(ex, disable_memory)
    live = [Hypothesis((), 0.0)]
    done: list[Hypothesis] = []
    for _ in range(max_len):
        dist = model.step_distributions(ex, fused, _prefixes(live, model.vocab_size),
                                        disable_copy)
        with np.errstate(divide="ignore"):
            logp = np.log(dist.mixture)
        total = np.array([h.score for h in live])[:, None] + logp
        rows, toks = np.nonzero(np.isfinite(total))
        vals = total[rows, toks]
        order = np.lexsort((toks, rows, -vals))[:beam_size]
        live_next = []
        for j in order:
            parent = live[rows[j]]
            tok = int(toks[j])
            hyp = Hypothesis(parent.tokens + (tok,), float(vals[j]), tok == EOS_ID)
            (done if hyp.finished else live_next).append(hyp)
        live = live_next
        if not live:
            break
    return rank_hypotheses(done + live)


def rank_hypotheses(hyps: Sequence[Hypothesis]) -> list[Hypothesis]:
    return sorted(hyps, key=lambda h: (-h.score, h.tokens))


def greedy_decode(model: KeyphraseGenerator, ex: Example, max_len: int = 40,
                  disable_memory: bool = False, disable_copy: bool = False) -> Hypothesis:
    _, _, fused = model.encode_document(ex, disable_memory)
    hyp = Hypothesis((), 0.0)
    for _ in range(max_len):
        dist = model.step_distributions(ex, fused, _prefixes([hyp], model.vocab_size),
                                        disable_copy)
        tok = int(dist.prediction()[0])
        hyp = Hypothesis(hyp.tokens + (tok,), hyp.score + float(np.log(dist.mixture[0, tok])),
                         tok == EOS_ID)
        if hyp.finished:
            break
    return hyp


def extract_phrases(hyp: Hypothesis | Sequence[int], ext: ExtendedVocabulary) -> list[tuple[str, ...]]:
    """Split on SEP, stop at EOS, drop empty phrases, map ids to words."""
    tokens = hyp.tokens if isinstance(hyp, Hypothesis) else tuple(hyp)
    phrases, cur = [], []
    for tok in tokens:
        if tok == EOS_ID:
            break
        if tok == SEP_ID:
            if cur:
                phrases.append(tuple(cur))
            cur = []
        else:
            cur.append(ext.word(tok))
    if cur:
        phrases.append(tuple(cur))
    return phrases


def dedupe_phrases(phrases: Sequence[Sequence[str]]) -> list[tuple[str, ...]]:
    """Keep the first phrase of each stemmed form."""
    seen, out = set(), []
    for p in phrases:
        key = stem_phrase(p)
        if key not in seen:
            seen.add(key)
            out.append(tuple(p))
    return out


def rank_predictions(hyps: Sequence[Hypothesis], ext: ExtendedVocabulary) -> PredictionSet:
    """Pool phrases across hypotheses (best first, emission order within one),
    keeping the first occurrence of each stemmed form."""
    ranked = rank_hypotheses(hyps)
    pred = PredictionSet()
    seen = set()
    for hyp in ranked:
        for phrase in extract_phrases(hyp, ext):
            key = stem_phrase(phrase)
            if key in seen:
                continue
            seen.add(key)
            pred.candidates.append(phrase)
            pred.scores.append(hyp.score)
    if ranked:
        pred.top_beam_phrases = dedupe_phrases(extract_phrases(ranked[0], ext))
    return pred


def decoder_states(model: KeyphraseGenerator, ex: Example, steps: int = 3,
                   disable_memory: bool = False, disable_copy: bool = False) -> np.ndarray:
    """Final-layer decoder outputs at greedy steps 1..steps, shape (steps, d).

    Decoding continues past an early EOS so every document yields ``steps`` rows.
    """
    _, _, fused = model.encode_document(ex, disable_memory)
    tokens: list[int] = []
    rows = []
    for _ in range(steps):
        prefix = _prefixes([Hypothesis(tuple(tokens), 0.0)], model.vocab_size)
        s_t, alpha, y_prev = model.decode_step(prefix, fused)
        rows.append(s_t[0].astype(np.float64))
        dist = model.distributions(s_t, alpha, fused, y_prev, ex.src, len(ex.ext), disable_copy)
        tokens.append(int(dist.prediction()[0]))
    return np.stack(rows)
