"""Keyphrase evaluation: stemmed matching, F1 at fixed and variable cutoffs,
recall at k, keyphrase-count error and diversity.

Documents whose gold list is empty for a split are left out of that split's
macro average. Predictions are stem-deduplicated before any metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import find_phrase
from .porter import porter_stem, stem_phrase  # noqa: F401  (re-exported)

F1_CUTOFFS = (5, 10, "M", "O")
RECALL_CUTOFFS = (10, 50)
SPLITS = ("present", "absent")


def is_present(phrase: Sequence[str], source_tokens: Sequence[str]) -> bool:
    """Stemmed phrase occurs contiguously in the stemmed source."""
    if not phrase:
        raise ValueError("empty phrase")
    return find_phrase(phrase, source_tokens) >= 0


def split_by_presence(phrases, source_tokens):
    present, absent = [], []
    for p in phrases:
        (present if is_present(p, source_tokens) else absent).append(p)
    return present, absent


def _dedupe(phrases):
    seen, out = set(), []
    for p in phrases:
        key = stem_phrase(p)
        if key not in seen:
            seen.add(key)
            out.append(tuple(p))
    return out


def match(predictions, gold) -> list[bool]:
    """Flag each prediction that equals a not-yet-claimed gold phrase after stemming."""
    remaining = [stem_phrase(g) for g in gold]
    flags = []
    for p in predictions:
        key = stem_phrase(p)
        if key in remaining:
            remaining.remove(key)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _cutoff(k, n_pred: int, n_gold: int) -> int:
    if k == "M":
        return n_pred
    if k == "O":
        return n_gold
    if isinstance(k, int) and not isinstance(k, bool) and k > 0:
        return k
    raise ValueError(f"invalid cutoff {k!r}")


def prf_at_k(predictions, gold, k) -> tuple[float, float, float]:
    """Precision, recall and F1 of the top-k predictions.

    ``k`` is a positive int, ``"M"`` (number of predictions) or ``"O"``
    (number of gold phrases). Precision divides by ``min(k, len(predictions))``.
    """
    preds = _dedupe(predictions)
    gold = _dedupe(gold)
    k = _cutoff(k, len(preds), len(gold))
    if not gold:
        raise ValueError("gold list is empty")
    top = preds[:k]
    if not top:
        return 0.0, 0.0, 0.0
    hits = sum(match(top, gold))
    p = hits / len(top)
    r = hits / len(gold)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def recall_at_k(predictions, gold, k: int) -> float:
    if isinstance(k, str):
        raise ValueError(f"invalid cutoff {k!r}")
    _cutoff(k, 0, 0)
    preds = _dedupe(predictions)
    gold = _dedupe(gold)
    if not gold:
        raise ValueError("gold list is empty")
    return sum(match(preds[:k], gold)) / len(gold)


def count_mae(pred_counts, gold_counts) -> tuple[float, float]:
    """(mean absolute error, mean predicted count)."""
    if len(pred_counts) != len(gold_counts):
        raise ValueError("count lists differ in length")
    if not pred_counts:
        return 0.0, 0.0
    n = len(pred_counts)
    mae = sum(abs(p - g) for p, g in zip(pred_counts, gold_counts)) / n
    return mae, sum(pred_counts) / n


def avg_unique(candidate_lists) -> float:
    """Mean number of distinct stemmed candidates per document."""
    if not candidate_lists:
        return 0.0
    return sum(len({stem_phrase(c) for c in cands}) for cands in candidate_lists) / len(candidate_lists)


@dataclass
class DocumentPrediction:
    """What the evaluator needs per document."""

    id: str
    source_tokens: Sequence[str]
    gold: Sequence[Sequence[str]]
    candidates: Sequence[Sequence[str]]
    top_beam: Sequence[Sequence[str]]


@dataclass
class SplitReport:
    metrics: dict[str, float] = field(default_factory=dict)
    documents: int = 0
    mae: float = 0.0
    avg_count: float = 0.0
    gold_avg_count: float = 0.0


@dataclass
class EvalReport:
    splits: dict[str, SplitReport]
    avg_unique: float
    documents: int

    def flat(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in SPLITS:
            s = self.splits[name]
            for key, val in s.metrics.items():
                out[f"{name}.{key}"] = val
            out[f"{name}.mae"] = s.mae
            out[f"{name}.avg_count"] = s.avg_count
            out[f"{name}.gold_avg_count"] = s.gold_avg_count
            out[f"{name}.documents"] = s.documents
        out["avg_unique"] = self.avg_unique
        out["documents"] = self.documents
        return out

    def to_text(self) -> str:
        lines = []
        for key, val in self.flat().items():
            lines.append(f"{key} = {val}" if isinstance(val, int) else f"{key} = {val:.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.flat(), indent=2, sort_keys=True) + "\n"


def _metric_names():
    return [f"f1@{k}" for k in F1_CUTOFFS] + [f"r@{k}" for k in RECALL_CUTOFFS]


def evaluate(docs: Sequence[DocumentPrediction]) -> EvalReport:
    """Macro-averaged report over present and absent splits."""
    sums = {s: {m: 0.0 for m in _metric_names()} for s in SPLITS}
    included = {s: 0 for s in SPLITS}
    counts = {s: ([], []) for s in SPLITS}
    for doc in docs:
        gold = dict(zip(SPLITS, split_by_presence(_dedupe(doc.gold), doc.source_tokens)))
        cands = dict(zip(SPLITS, split_by_presence(_dedupe(doc.candidates), doc.source_tokens)))
        top = dict(zip(SPLITS, split_by_presence(_dedupe(doc.top_beam), doc.source_tokens)))
        for s in SPLITS:
            counts[s][0].append(len(top[s]))
            counts[s][1].append(len(gold[s]))
            if not gold[s]:
                continue
            included[s] += 1
            acc = sums[s]
            for k in (5, 10, "O"):
                acc[f"f1@{k}"] += prf_at_k(cands[s], gold[s], k)[2]
            acc["f1@M"] += prf_at_k(top[s], gold[s], "M")[2]
            for k in RECALL_CUTOFFS:
                acc[f"r@{k}"] += recall_at_k(cands[s], gold[s], k)
    splits = {}
    for s in SPLITS:
        n = included[s]
        mae, avg = count_mae(*counts[s])
        gold_avg = sum(counts[s][1]) / len(counts[s][1]) if counts[s][1] else 0.0
        splits[s] = SplitReport({m: (v / n if n else 0.0) for m, v in sums[s].items()},
                                n, mae, avg, gold_avg)
    return EvalReport(splits, avg_unique([d.candidates for d in docs]), len(docs))
