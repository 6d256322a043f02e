"""Document ingestion, vocabularies, and joined keyphrase target sequences."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .porter import stem_phrase

log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS, SEP, DIGIT = "<pad>", "<unk>", "<bos>", "<eos>", "<sep>", "<digit>"
SPECIALS = (PAD, UNK, BOS, EOS, SEP, DIGIT)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, SEP_ID, DIGIT_ID = range(len(SPECIALS))

# order matters: the placeholder must survive re-tokenization, and number
# runs are grabbed whole before the generic word rule
_TOKEN_RE = re.compile(r"<digit>|\d+(?:[.,\-]\d+)*(?!\w)|\w+|[^\w\s]")
_NUMBER_RE = re.compile(r"\d+(?:[.,\-]\d+)*")


class CorpusError(ValueError):
    pass


def preprocess_text(raw: str) -> list[str]:
    """Lowercase, split into word and punctuation tokens, mask number runs."""
    tokens = []
    for tok in _TOKEN_RE.findall(raw.lower()):
        tokens.append(DIGIT if _NUMBER_RE.fullmatch(tok) else tok)
    return tokens


@dataclass(frozen=True)
class Document:
    id: str
    title_tokens: tuple[str, ...]
    abstract_tokens: tuple[str, ...]
    gold_keyphrases: tuple[tuple[str, ...], ...]

    @property
    def source_tokens(self) -> tuple[str, ...]:
        return self.title_tokens + self.abstract_tokens

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        phrases = []
        for kp in rec.get("keyphrases", []):
            toks = tuple(preprocess_text(kp))
            if toks:
                phrases.append(toks)
        return cls(
            id=str(rec["id"]),
            title_tokens=tuple(preprocess_text(rec.get("title", ""))),
            abstract_tokens=tuple(preprocess_text(rec.get("abstract", ""))),
            gold_keyphrases=tuple(phrases),
        )

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "title": " ".join(self.title_tokens),
            "abstract": " ".join(self.abstract_tokens),
            "keyphrases": [" ".join(kp) for kp in self.gold_keyphrases],
        }


def ingest(records: Iterable[dict]) -> list[Document]:
    """Normalize records, drop empty-gold and empty-source ones, drop duplicates.

    Duplicates are exact matches on the normalized source tokens; the first
    occurrence is kept.
    """
    docs: list[Document] = []
    seen: set[tuple[str, ...]] = set()
    for rec in records:
        doc = Document.from_record(rec)
        if not doc.gold_keyphrases:
            log.warning("dropping %s: no gold keyphrases", doc.id)
            continue
        if not doc.source_tokens:
            log.warning("dropping %s: empty source", doc.id)
            continue
        if doc.source_tokens in seen:
            log.info("dropping %s: duplicate source", doc.id)
            continue
        seen.add(doc.source_tokens)
        docs.append(doc)
    return docs


def read_records(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_corpus(path) -> list[Document]:
    return ingest(read_records(path))


def save_corpus(docs: Sequence[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")


class Vocabulary:
    """Dense word/id bijection with the special tokens at fixed low ids."""

    def __init__(self, words: Sequence[str]):
        self.itos: list[str] = list(SPECIALS) + [w for w in words if w not in SPECIALS]
        self.stoi: dict[str, int] = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise CorpusError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi

    def id(self, word: str) -> int:
        return self.stoi.get(word, UNK_ID)

    def word(self, idx: int) -> str:
        return self.itos[idx]

    def save(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words = Path(path).read_text(encoding="utf-8").split("\n")
        if words and words[-1] == "":
            words.pop()
        if tuple(words[: len(SPECIALS)]) != SPECIALS:
            raise CorpusError(f"{path}: special tokens missing or out of order")
        return cls(words[len(SPECIALS):])


def build_vocabulary(docs: Iterable[Document], cap: int = 50_000) -> Vocabulary:
    """Top ``cap`` content words by frequency over sources and gold phrases.

    Ties are broken lexicographically so repeated builds are identical.
    """
    if cap < 1:
        raise CorpusError("vocabulary cap must be >= 1")
    counts: Counter[str] = Counter()
    for doc in docs:
        counts.update(doc.source_tokens)
        for kp in doc.gold_keyphrases:
            counts.update(kp)
    for special in SPECIALS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([w for w, _ in ranked[:cap]])


@dataclass
class ExtendedVocabulary:
    """Base vocabulary plus the novel words of one source document."""

    base: Vocabulary
    novel_words: list[str] = field(default_factory=list)
    position_map: list[int] = field(default_factory=list)

    def __post_init__(self):
        self._novel_ids = {w: len(self.base) + i for i, w in enumerate(self.novel_words)}

    def __len__(self) -> int:
        return len(self.base) + len(self.novel_words)

    def id(self, word: str) -> int:
        if word in self.base.stoi:
            return self.base.stoi[word]
        return self._novel_ids.get(word, UNK_ID)

    def word(self, idx: int) -> str:
        if idx < len(self.base):
            return self.base.itos[idx]
        return self.novel_words[idx - len(self.base)]


def extend_vocabulary(vocab: Vocabulary, source_tokens: Sequence[str]) -> ExtendedVocabulary:
    novel: dict[str, int] = {}
    positions = []
    for tok in source_tokens:
        if tok in vocab.stoi:
            positions.append(vocab.stoi[tok])
        else:
            if tok not in novel:
                novel[tok] = len(vocab) + len(novel)
            positions.append(novel[tok])
    return ExtendedVocabulary(vocab, list(novel), positions)


def find_phrase(phrase: Sequence[str], source: Sequence[str]) -> int:
    """First start index of the stemmed phrase inside the stemmed source, or -1."""
    p = stem_phrase(phrase)
    s = stem_phrase(source)
    n = len(p)
    if n == 0:
        return -1
    for i in range(len(s) - n + 1):
        if s[i : i + n] == p:
            return i
    return -1


@dataclass(frozen=True)
class TargetSequence:
    ids: tuple[int, ...]
    phrases: tuple[tuple[str, ...], ...]
    present_count: int


def order_keyphrases(doc: Document) -> tuple[list[tuple[str, ...]], int]:
    """Present phrases by first occurrence, then absent phrases in gold order."""
    present, absent = [], []
    source = doc.source_tokens
    for kp in doc.gold_keyphrases:
        pos = find_phrase(kp, source)
        if pos >= 0:
            present.append((pos, kp))
        else:
            absent.append(kp)
    present.sort(key=lambda item: item[0])  # stable: ties keep gold order
    return [kp for _, kp in present] + absent, len(present)


def build_target_sequence(
    doc: Document,
    vocab: Vocabulary,
    ext: ExtendedVocabulary | None = None,
    max_len: int | None = None,
) -> TargetSequence:
    """Join ordered keyphrases with SEP and terminate with EOS.

    With ``max_len`` set, trailing phrases that do not fit are dropped so the
    sequence (EOS included) stays within the limit.
    """
    if not doc.gold_keyphrases:
        raise CorpusError(f"document {doc.id} has no gold keyphrases")
    if ext is None:
        ext = extend_vocabulary(vocab, doc.source_tokens)
    phrases, n_present = order_keyphrases(doc)
    ids: list[int] = []
    kept = []
    for kp in phrases:
        piece = ([SEP_ID] if ids else []) + [ext.id(w) for w in kp]
        if max_len is not None and len(ids) + len(piece) + 1 > max_len:
            break
        ids.extend(piece)
        kept.append(kp)
    ids.append(EOS_ID)
    return TargetSequence(tuple(ids), tuple(kept), min(n_present, len(kept)))
