"""End-to-end stages: preprocess, vocabulary, memory, train, predict, eval,
decoder-state dump. Each stage reads and writes files named by a RunConfig."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import memory as M
from .checkpoint import CheckpointError, load_into, read_checkpoint, save_checkpoint
from .corpus import CorpusError, Vocabulary, build_vocabulary, ingest, load_corpus
from .corpus import read_records, save_corpus
from .decode import beam_search, decoder_states, rank_predictions
from .metrics import DocumentPrediction, EvalReport, evaluate
from .model import ConfigError, KeyphraseGenerator, ModelConfig, prepare
from .training import fit

log = logging.getLogger(__name__)

# exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_ID_MISMATCH = 5
EXIT_MISSING = {
    "input": 10,
    "corpus": 11,
    "eval_corpus": 12,
    "vocab": 13,
    "memory": 14,
    "checkpoint": 15,
    "predictions": 16,
}


class PipelineError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


PATH_FIELDS = ("corpus", "eval_corpus", "vocab", "memory", "checkpoint", "loss_log",
               "predictions", "report", "states")


@dataclass
class RunConfig:
    corpus: str = "corpus.jsonl"
    eval_corpus: str | None = None      # documents to predict and score; defaults to corpus
    vocab: str = "vocab.txt"
    memory: str = "memory.bin"
    checkpoint: str = "model.ckpt"
    loss_log: str = "loss.log"
    predictions: str = "predictions.jsonl"
    report: str = "report.txt"
    states: str = "states.tsv"
    model: ModelConfig = field(default_factory=ModelConfig)
    steps: int = 1000
    batch_size: int = 8
    lr: float = 1e-4
    seed: int = 13
    eval_interval: int = 0              # 0: checkpoint only at the end
    state_steps: int = 3
    disable_memory: bool = False
    disable_copy: bool = False
    mask_self: bool = False
    memory_top_k: int | None = None

    @property
    def beam_size(self) -> int:
        return self.model.beam_size

    @property
    def eval_path(self) -> str:
        return self.eval_corpus or self.corpus

    def report_json(self) -> str:
        root, _ = os.path.splitext(self.report)
        return root + ".json"

    def with_overrides(self, values: dict) -> "RunConfig":
        return replace(self, **_coerce(self, values))


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(cfg: RunConfig, values: dict) -> dict:
    """Split raw key/value pairs into RunConfig fields and a new ModelConfig."""
    run_fields = {f.name for f in fields(RunConfig)} - {"model"}
    model_fields = {f.name for f in fields(ModelConfig)}
    out, model_kw = {}, cfg.model.to_dict()
    for key, raw in values.items():
        key = key.replace("-", "_")
        try:
            if key in model_fields:
                model_kw[key] = float(raw) if key == "dropout_rate" else int(raw)
            elif key not in run_fields:
                raise ConfigError(f"unknown configuration key {key!r}")
            elif key in ("disable_memory", "disable_copy", "mask_self"):
                out[key] = _parse_bool(raw)
            elif key == "memory_top_k":
                out[key] = None if str(raw).lower() in ("", "none", "0") else int(raw)
            elif key == "lr":
                out[key] = float(raw)
            elif key in PATH_FIELDS:
                out[key] = None if raw in (None, "") else str(raw)
            else:
                out[key] = int(raw)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    out["model"] = ModelConfig(**model_kw)
    return out


def load_config(path) -> RunConfig:
    """``key = value`` lines; ``#`` starts a comment. Relative paths, including
    the default artifact names, resolve against the config file's directory."""
    if not os.path.exists(path):
        raise PipelineError(f"config file not found: {path}", EXIT_CONFIG)
    base = os.path.dirname(os.path.abspath(path))
    values = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key.replace("-", "_") in PATH_FIELDS and val and not os.path.isabs(val):
                val = os.path.join(base, val)
            values[key] = val
    for name in PATH_FIELDS:
        default = getattr(RunConfig, name, None)
        if name not in values and default:
            values[name] = os.path.join(base, default)
    return RunConfig().with_overrides(values)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        path = cfg.eval_path if name == "eval_corpus" else getattr(cfg, name)
        if not path or not os.path.exists(path):
            raise PipelineError(f"missing {name.replace('_', ' ')}: {path}", EXIT_MISSING[name])


def _load_docs(path):
    try:
        return load_corpus(path)
    except (CorpusError, json.JSONDecodeError) as exc:
        raise PipelineError(f"{path}: {exc}", EXIT_DATA) from exc


def _memory_docs(cfg: RunConfig):
    """Training documents followed by evaluation documents not already present."""
    train = _load_docs(cfg.corpus)
    if not cfg.eval_corpus:
        return train, train
    seen = {d.id for d in train}
    extra = [d for d in _load_docs(cfg.eval_corpus) if d.id not in seen]
    return train, train + extra


def _new_model(cfg: RunConfig, vocab_size: int) -> KeyphraseGenerator:
    model = KeyphraseGenerator(cfg.model, vocab_size, seed=cfg.seed)
    model.mask_self = cfg.mask_self
    model.memory_top_k = cfg.memory_top_k
    return model


# -- stages -----------------------------------------------------------
def run_preprocess(input_path, output_path) -> int:
    """Clean raw records into the corpus format; returns the document count."""
    if not os.path.exists(input_path):
        raise PipelineError(f"missing input: {input_path}", EXIT_MISSING["input"])
    try:
        docs = ingest(read_records(input_path))
    except (CorpusError, json.JSONDecodeError) as exc:
        raise PipelineError(f"{input_path}: {exc}", EXIT_DATA) from exc
    save_corpus(docs, output_path)
    return len(docs)


def run_build_vocab(cfg: RunConfig) -> Vocabulary:
    _require(cfg, "corpus")
    vocab = build_vocabulary(_load_docs(cfg.corpus), cap=cfg.model.vocab_cap)
    vocab.save(cfg.vocab)
    return vocab


def run_build_memory(cfg: RunConfig) -> M.DocumentMemory:
    """Entries for every training and evaluation document, initialized from the
    seeded model's word embeddings. Entries outside the training split are frozen."""
    _require(cfg, "corpus", "eval_corpus", "vocab")
    vocab = Vocabulary.load(cfg.vocab)
    train, docs = _memory_docs(cfg)
    train_ids = {d.id for d in train}
    model = _new_model(cfg, len(vocab))
    mem = M.build_memory(docs, model.sentence_encoder(vocab), cfg.model.hidden_dim,
                         trainable=[d.id in train_ids for d in docs])
    M.save_memory(mem, cfg.memory, seed=cfg.seed)
    return mem


def _checkpoint_header(cfg: RunConfig, vocab_size: int) -> dict:
    return {
        "config": cfg.model.to_dict(),
        "seed": cfg.seed,
        "vocab_size": vocab_size,
        "mask_self": cfg.mask_self,
        "memory_top_k": cfg.memory_top_k,
        "disable_memory": cfg.disable_memory,
        "disable_copy": cfg.disable_copy,
    }


def run_train(cfg: RunConfig) -> list[float]:
    """Train from the seeded initialization; writes the loss log and checkpoints."""
    _require(cfg, "corpus", "vocab", "memory")
    vocab = Vocabulary.load(cfg.vocab)
    docs = _load_docs(cfg.corpus)
    mem = M.load_memory(cfg.memory)
    model = _new_model(cfg, len(vocab))
    model.attach_memory(mem)
    examples = [prepare(d, vocab, cfg.model, mem) for d in docs]
    header = _checkpoint_header(cfg, len(vocab))
    with open(cfg.loss_log, "w", encoding="utf-8") as log_fh:
        log_fh.write(f"# seed={cfg.seed} steps={cfg.steps} batch_size={cfg.batch_size} lr={cfg.lr!r}\n")

        def on_step(step, loss):
            log_fh.write(f"{step}\t{loss!r}\n")
            if cfg.eval_interval and step % cfg.eval_interval == 0:
                save_checkpoint(cfg.checkpoint, model.store, header)
            log.info("step %d loss %.4f", step, loss)

        losses = fit(model, examples, cfg.steps, cfg.batch_size, cfg.lr,
                     rng=np.random.default_rng(cfg.seed), disable_memory=cfg.disable_memory,
                     disable_copy=cfg.disable_copy, callback=on_step)
    save_checkpoint(cfg.checkpoint, model.store, header)
    return losses


def load_trained(cfg: RunConfig):
    """(model, vocab, memory) restored from the checkpoint."""
    _require(cfg, "vocab", "memory", "checkpoint")
    vocab = Vocabulary.load(cfg.vocab)
    mem = M.load_memory(cfg.memory)
    try:
        header, tensors, moments = read_checkpoint(cfg.checkpoint)
    except CheckpointError as exc:
        raise PipelineError(str(exc), EXIT_CONFIG) from exc
    saved = ModelConfig.from_dict(header["config"])
    dims = ("layer_count", "head_count", "hidden_dim", "max_input_len", "max_target_len")
    bad = [k for k in dims if getattr(saved, k) != getattr(cfg.model, k)]
    if bad or header["vocab_size"] != len(vocab):
        raise ConfigError(f"checkpoint does not match configuration: {bad or ['vocab_size']}")
    model = _new_model(cfg, len(vocab))
    model.attach_memory(mem)
    try:
        load_into(model.store, tensors, moments, header["step"])
    except CheckpointError as exc:
        raise ConfigError(str(exc)) from exc
    return model, vocab, mem


def _eval_docs(cfg: RunConfig):
    _require(cfg, "eval_corpus")
    return _load_docs(cfg.eval_path)


def run_predict(cfg: RunConfig) -> list[dict]:
    """One JSON record per evaluation document, in input order."""
    docs = _eval_docs(cfg)
    model, vocab, mem = load_trained(cfg)
    records = []
    max_len = cfg.model.max_target_len
    with open(cfg.predictions, "w", encoding="utf-8") as fh:
        for doc in docs:
            ex = prepare(doc, vocab, cfg.model, mem, with_target=False)
            hyps = beam_search(model, ex, cfg.beam_size, max_len, cfg.disable_memory,
                               cfg.disable_copy)
            pred = rank_predictions(hyps, ex.ext)
            rec = {
                "id": doc.id,
                "candidates": [" ".join(p) for p in pred.candidates],
                "top_beam": [" ".join(p) for p in pred.top_beam_phrases],
                "scores": pred.scores,
                "seed": cfg.seed,
            }
            fh.write(json.dumps(rec) + "\n")
            records.append(rec)
    return records


def read_predictions(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PipelineError(f"{path}:{n}: {exc}", EXIT_DATA) from exc
            if "id" not in rec:
                raise PipelineError(f"{path}:{n}: record without id", EXIT_DATA)
            out.append(rec)
    return out


def score_predictions(docs, records) -> EvalReport:
    """Align predictions with gold documents by id and evaluate."""
    by_id = {r["id"]: r for r in records}
    doc_ids = {d.id for d in docs}
    missing = sorted(doc_ids - set(by_id))
    unknown = sorted(set(by_id) - doc_ids)
    if missing or unknown or len(by_id) != len(records):
        msg = []
        if missing:
            msg.append(f"no prediction for: {', '.join(missing)}")
        if unknown:
            msg.append(f"not in corpus: {', '.join(unknown)}")
        if len(by_id) != len(records):
            msg.append("duplicate prediction ids")
        raise PipelineError("id mismatch; " + "; ".join(msg), EXIT_ID_MISMATCH)
    rows = []
    for doc in docs:
        rec = by_id[doc.id]
        rows.append(DocumentPrediction(
            doc.id, doc.source_tokens, doc.gold_keyphrases,
            [tuple(p.split()) for p in rec.get("candidates", []) if p.strip()],
            [tuple(p.split()) for p in rec.get("top_beam", []) if p.strip()],
        ))
    return evaluate(rows)


def run_eval(cfg: RunConfig) -> EvalReport:
    _require(cfg, "eval_corpus", "predictions")
    docs = _eval_docs(cfg)
    records = read_predictions(cfg.predictions)
    report = score_predictions(docs, records)
    seeds = {r.get("seed") for r in records} - {None}
    seed = seeds.pop() if len(seeds) == 1 else cfg.seed
    with open(cfg.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + f"seed = {seed}\n")
    with open(cfg.report_json(), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(dict(report.flat(), seed=seed), indent=2, sort_keys=True) + "\n")
    return report


def dump_decoder_states(cfg: RunConfig) -> np.ndarray:
    """Final-layer decoder states of the first greedy steps, one TSV row per
    (document, step)."""
    docs = _eval_docs(cfg)
    model, vocab, mem = load_trained(cfg)
    rows = []
    d = cfg.model.hidden_dim
    with open(cfg.states, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={cfg.seed}\n")
        fh.write("\t".join(["doc_id", "step"] + [f"h{i}" for i in range(d)]) + "\n")
        for doc in docs:
            ex = prepare(doc, vocab, cfg.model, mem, with_target=False)
            states = decoder_states(model, ex, cfg.state_steps, cfg.disable_memory,
                                    cfg.disable_copy)
            for t, vec in enumerate(states, 1):
                fh.write("\t".join([doc.id, str(t)] + [f"{v:.8g}" for v in vec]) + "\n")
            rows.append(states)
    return np.concatenate(rows) if rows else np.zeros((0, d))
