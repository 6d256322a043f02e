"""Deterministic synthetic corpora for tests and demos.

Documents come in neighbor pairs sharing a topic. Each document has three
present keyphrases woven into its text and one absent keyphrase that occurs
verbatim only in its neighbor's text.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .porter import porter_stem

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_NUCLEI = ["a", "o", "u", "i"]

FILLER = (
    "we present a new method for the analysis of problems and show that it "
    "improves results on several tasks in this work our approach builds simple "
    "models with strong performance across experiments"
).split()


def _pseudo_words(rng: np.random.Generator, count: int) -> list[str]:
    """Distinct CVCV(C) words whose Porter stems are also distinct."""
    words, stems = [], set()
    while len(words) < count:
        syl = [rng.choice(_ONSETS) + rng.choice(_NUCLEI) for _ in range(2)]
        w = "".join(syl) + rng.choice(["", "n", "r", "x"])
        st = porter_stem(w)
        if st in stems or w in FILLER:
            continue
        stems.add(st)
        words.append(w)
    return words


def make_neighbor_corpus(n_pairs: int = 32, seed: int = 7) -> list[dict]:
    """Records for ``2 * n_pairs`` documents; partners are adjacent.

    Each record carries an extra ``neighbor`` field naming its partner.
    """
    rng = np.random.default_rng(seed)
    bank = _pseudo_words(rng, n_pairs * 16)
    records = []
    for k in range(n_pairs):
        words = bank[16 * k : 16 * (k + 1)]
        topic = words[:4]
        phrases = [tuple(words[4 + 2 * j : 6 + 2 * j]) for j in range(6)]
        ids = (f"p{k:02d}a", f"p{k:02d}b")
        own = (phrases[:3], phrases[3:])
        for side in (0, 1):
            present = own[side]
            absent = own[1 - side][0]
            title = [rng.choice(FILLER), "of"] + list(present[0]) + ["for", topic[side]]
            body = []
            for j, kp in enumerate(present):
                body += list(rng.choice(FILLER, size=2)) + [topic[j], topic[j + 1]]
                body += list(kp) + [rng.choice(FILLER)]
            body += [topic[3], topic[0]] + list(rng.choice(FILLER, size=2))
            gold = [" ".join(kp) for kp in present] + [" ".join(absent)]
            order = rng.permutation(len(gold))
            records.append({
                "id": ids[side],
                "title": " ".join(title),
                "abstract": " ".join(body),
                "keyphrases": [gold[i] for i in order],
                "neighbor": ids[1 - side],
            })
    return records


def bundled(name: str = "synthetic_64") -> list[dict]:
    """Load a corpus shipped in ``kpgen/data``."""
    text = resources.files("kpgen").joinpath("data", f"{name}.jsonl").read_text("utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
