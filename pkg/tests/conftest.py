import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kpgen.corpus import Document, Vocabulary, build_vocabulary, ingest, preprocess_text
from kpgen.memory import build_memory
from kpgen.model import KeyphraseGenerator, ModelConfig, prepare

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def acceptance(name, ok, detail):
    """Record one pass/fail line for the acceptance summary and print it."""
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

# Title and the visible abstract sentences of the worked example used in the
# stemming/presence tests.
DIALOGUE_TITLE = ("A study on meaning processing of dialogue with an example of development "
              "of travel consultation system.")
DIALOGUE_ABSTRACT = (
    "This work describes an approach to processing meaning instead of processing "
    "information in computing. Human intellectual activity is supported by linguistic "
    "activities in the brain. Therefore, processing the meaning of language user and "
    "retrieve information through dialogue. Through a simulation example of the system, "
    "we show that both information processing and language processing are integrated."
)
DIALOGUE_GOLD = [
    "linguistic activities", "human intellectual activity", "meaning processing",
    "information processing", "travel consultation dialogue system", "language processing",
    "information retrieval", "user utterance understanding",
]


@pytest.fixture
def dialogue_doc():
    return Document.from_record({"id": "dialogue", "title": DIALOGUE_TITLE,
                                 "abstract": DIALOGUE_ABSTRACT, "keyphrases": DIALOGUE_GOLD})


def doc(id, text, phrases, title=""):
    return Document.from_record({"id": id, "title": title, "abstract": text,
                                 "keyphrases": phrases})


TINY = dict(layer_count=1, head_count=2, hidden_dim=16, max_input_len=32,
            dropout_rate=0.0, max_target_len=12)


def tiny_setup(docs, seed=0, dtype=np.float64, memory=True, **overrides):
    """(model, vocab, examples) for a small model over ``docs``."""
    cfg = ModelConfig(**{**TINY, **overrides})
    vocab = build_vocabulary(docs)
    model = KeyphraseGenerator(cfg, len(vocab), seed=seed, dtype=dtype)
    mem = None
    if memory:
        mem = build_memory(docs, model.sentence_encoder(vocab), cfg.hidden_dim, dtype=dtype)
        model.attach_memory(mem)
    return model, vocab, [prepare(d, vocab, cfg, mem) for d in docs]


@pytest.fixture
def toy_docs():
    return ingest([
        {"id": "d1", "title": "neural keyphrase generation",
         "abstract": "we generate keyphrases with a copy mechanism and a memory",
         "keyphrases": ["keyphrase generation", "copy mechanism", "document memory"]},
        {"id": "d2", "title": "document memory networks",
         "abstract": "memory networks read a document collection for keyphrase tasks",
         "keyphrases": ["memory networks", "keyphrase generation"]},
        {"id": "d3", "title": "beam search for sequence models",
         "abstract": "beam search decodes sequences with a copy mechanism",
         "keyphrases": ["beam search", "copy mechanism"]},
    ])


def small_search_problem(seed, max_len=4):
    """Random tiny model and example whose extended vocabulary has at most six
    emittable ids (EOS, SEP, DIGIT plus up to three words, some copy-only)."""
    rng = np.random.default_rng(seed)
    words = ["alpha", "beta", "gamma"]
    n_words = int(rng.integers(1, 4))
    chosen = list(rng.permutation(words)[:n_words])
    in_vocab = chosen[: int(rng.integers(1, n_words + 1))]
    vocab_doc = doc("v", " ".join(in_vocab), [in_vocab[0]])
    src = [str(w) for w in rng.choice(chosen, size=int(rng.integers(2, 6)))]
    query = doc("q", " ".join(src), [src[0]])
    cfg = ModelConfig(**{**TINY, "max_target_len": max_len})
    vocab = build_vocabulary([vocab_doc])
    model = KeyphraseGenerator(cfg, len(vocab), seed=seed, dtype=np.float64)
    mem = build_memory([vocab_doc, query], model.sentence_encoder(vocab), cfg.hidden_dim,
                       dtype=np.float64)
    model.attach_memory(mem)
    return model, prepare(query, vocab, cfg, mem)


def exhaustive_best(model, ex, max_len):
    """(tokens, score) of the best sequence by brute-force enumeration: a
    sequence ends at EOS or when it reaches ``max_len`` tokens."""
    from kpgen.corpus import BOS_ID, EOS_ID
    from kpgen.model import to_base

    _, _, fused = model.encode_document(ex)
    best = [(), -np.inf]

    def visit(tokens, score):
        if tokens and (tokens[-1] == EOS_ID or len(tokens) == max_len):
            if score > best[1] or (score == best[1] and tokens < best[0]):
                best[:] = [tokens, score]
            return
        prefix = np.array([[BOS_ID, *to_base(np.array(tokens, dtype=np.int64), model.vocab_size)]])
        mix = model.step_distributions(ex, fused, prefix).mixture[0]
        for tok in np.flatnonzero(mix > 0):
            visit(tokens + (int(tok),), score + float(np.log(mix[tok])))

    visit((), 0.0)
    return best[0], best[1]


def emittable(model, ex):
    from kpgen.corpus import BOS_ID
    _, _, fused = model.encode_document(ex)
    return np.flatnonzero(model.step_distributions(ex, fused, np.array([[BOS_ID]])).mixture[0] > 0)


def five_doc_fixture():
    """Five documents with a report worked out by hand (see EXPECTED_REPORT)."""
    from kpgen.metrics import DocumentPrediction as D
    P = lambda s: tuple(s.split())
    ps = lambda *xs: [P(x) for x in xs]
    filler = [f"p{i:02d}" for i in range(1, 11)]
    return [
        D("d1", P("alpha beta gamma delta"), ps("alpha", "beta", "kappa"),
          ps("alpha", "kappa", "gamma", "beta", "omega"), ps("alpha", "kappa")),
        D("d2", P("sigma theta"), ps("sigma theta", "omega"),
          ps("theta", "sigma theta"), ps("theta")),
        D("d3", P("alpha gamma"), ps("gamma"), ps("gamma"), ps("gamma")),
        D("d4", P("delta kappa"), ps("omega theta"),
          ps("delta", "kappa", "omega theta"), ps("delta", "kappa", "omega theta")),
        D("d5", P(" ".join(["beta", "delta", "gamma"] + filler)), ps("beta", "delta gamma", "sigma"),
          ps(*filler, "beta", "delta gamma"), ps("p01", "beta")),
    ]


# Per-document values, present split (d4 has no present gold, so it is left out):
#   d1 F1@5 = F1@10 = 0.8, F1@O = 0.5, F1@M = 2/3, R@10 = R@50 = 1
#   d2 F1@5 = F1@10 = 2/3, F1@O = F1@M = 0, R@10 = R@50 = 1
#   d3 everything 1
#   d5 F1@5 = F1@10 = F1@O = 0, F1@M = 0.5, R@10 = 0, R@50 = 1
# Absent split (d3 left out):
#   d1 F1@5 = F1@10 = 2/3, F1@O = F1@M = R@10 = R@50 = 1
#   d2 and d5 have no absent predictions, d4 scores 1 everywhere
EXPECTED_REPORT = {
    "present.f1@5": (0.8 + 2 / 3 + 1 + 0) / 4,
    "present.f1@10": (0.8 + 2 / 3 + 1 + 0) / 4,
    "present.f1@M": (2 / 3 + 0 + 1 + 0.5) / 4,
    "present.f1@O": (0.5 + 0 + 1 + 0) / 4,
    "present.r@10": 0.75,
    "present.r@50": 1.0,
    "present.documents": 4,
    "present.mae": 3 / 5,          # top-beam counts [1,1,1,2,2] vs gold [2,1,1,0,2]
    "present.avg_count": 7 / 5,
    "present.gold_avg_count": 6 / 5,
    "absent.f1@5": (2 / 3 + 0 + 1 + 0) / 4,
    "absent.f1@10": (2 / 3 + 0 + 1 + 0) / 4,
    "absent.f1@M": 0.5,
    "absent.f1@O": 0.5,
    "absent.r@10": 0.5,
    "absent.r@50": 0.5,
    "absent.documents": 4,
    "absent.mae": 2 / 5,           # [1,0,0,1,0] vs [1,1,0,1,1]
    "absent.avg_count": 2 / 5,
    "absent.gold_avg_count": 4 / 5,
    "avg_unique": (5 + 2 + 1 + 3 + 12) / 5,
    "documents": 5,
}
