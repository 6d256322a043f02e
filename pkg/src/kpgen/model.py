"""Transformer encoder-decoder with topic fusion and a pointer-generator head."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import memory as M
from .corpus import BOS_ID, PAD_ID, UNK_ID, Document, ExtendedVocabulary, Vocabulary
from .corpus import build_target_sequence, extend_vocabulary
from .nn import layers as L
from .nn import tensor as T
from .nn.params import ParameterStore
from .nn.tensor import Tensor

log = logging.getLogger(__name__)

# never emitted at inference
BLOCKED_IDS = (PAD_ID, UNK_ID, BOS_ID)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    layer_count: int = 4
    head_count: int = 8
    hidden_dim: int = 768
    max_input_len: int = 768
    dropout_rate: float = 0.5
    vocab_cap: int = 50_000
    beam_size: int = 50
    max_target_len: int = 40

    def __post_init__(self):
        for f in ("layer_count", "head_count", "hidden_dim", "max_input_len",
                  "vocab_cap", "beam_size", "max_target_len"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{f} must be positive")
        if self.hidden_dim % self.head_count:
            raise ConfigError("hidden_dim must be divisible by head_count")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k in known:
                kwargs[k] = float(v) if k == "dropout_rate" else int(v)
        return cls(**kwargs)


@dataclass
class Example:
    """One document prepared for the network."""

    doc: Document
    ext: ExtendedVocabulary
    src: np.ndarray          # extended ids of the (possibly truncated) source
    tgt: np.ndarray          # extended ids of the target, EOS-terminated
    memory_index: int = -1


def prepare(doc: Document, vocab: Vocabulary, config: ModelConfig,
            memory: M.DocumentMemory | None = None, with_target=True) -> Example:
    source = doc.source_tokens
    if len(source) > config.max_input_len:
        log.warning("truncating %s from %d to %d tokens", doc.id, len(source),
                    config.max_input_len)
        source = source[: config.max_input_len]
    ext = extend_vocabulary(vocab, source)
    tgt = np.zeros(0, dtype=np.int64)
    if with_target:
        tgt = np.array(build_target_sequence(doc, vocab, ext, config.max_target_len).ids)
    idx = memory.index(doc.id) if memory is not None else -1
    return Example(doc, ext, np.array(ext.position_map, dtype=np.int64), tgt, idx)


@dataclass
class Batch:
    src: np.ndarray       # (B, n) extended ids, PAD-filled
    src_mask: np.ndarray  # (B, n)
    tgt_in: np.ndarray    # (B, T) base ids, BOS first
    tgt_out: np.ndarray   # (B, T) extended ids
    tgt_mask: np.ndarray  # (B, T)
    memory_index: np.ndarray
    vocab_size: int

    @property
    def src_base(self) -> np.ndarray:
        return np.where(self.src >= self.vocab_size, UNK_ID, self.src)


def to_base(ids: np.ndarray, vocab_size: int) -> np.ndarray:
    return np.where(ids >= vocab_size, UNK_ID, ids)


def make_batch(examples: Sequence[Example], vocab_size: int) -> Batch:
    if not examples:
        raise ValueError("empty batch")
    b = len(examples)
    n = max(len(e.src) for e in examples)
    t = max(len(e.tgt) for e in examples)
    src = np.full((b, n), PAD_ID, dtype=np.int64)
    tgt_out = np.full((b, t), PAD_ID, dtype=np.int64)
    tgt_in = np.full((b, t), PAD_ID, dtype=np.int64)
    for i, e in enumerate(examples):
        src[i, : len(e.src)] = e.src
        tgt_out[i, : len(e.tgt)] = e.tgt
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1 : len(e.tgt)] = to_base(e.tgt[:-1], vocab_size)
    return Batch(
        src=src,
        src_mask=np.arange(n)[None, :] < np.array([len(e.src) for e in examples])[:, None],
        tgt_in=tgt_in,
        tgt_out=tgt_out,
        tgt_mask=np.arange(t)[None, :] < np.array([len(e.tgt) for e in examples])[:, None],
        memory_index=np.array([e.memory_index for e in examples], dtype=np.int64),
        vocab_size=vocab_size,
    )


@dataclass
class OutputDistributions:
    """Per-step distributions; all arrays have a leading row axis."""

    d_v: np.ndarray       # over V' with zero padding past |V|
    d_c: np.ndarray       # over V'
    gate: np.ndarray      # generation probability, shape (R,)
    mixture: np.ndarray   # over V'

    def prediction(self) -> np.ndarray:
        return np.argmax(self.mixture, axis=-1)  # first max wins: lowest id


def context_vector(alpha, fused):
    """``c = sum_i alpha_i h~_i``; alpha (..., n), fused (..., n, d)."""
    alpha = T.as_tensor(alpha)
    fused = T.as_tensor(fused)
    if alpha.shape[-1] != fused.shape[-2]:
        raise ValueError("attention length does not match the number of source states")
    squeeze = alpha.data.ndim == fused.data.ndim - 1
    if squeeze:
        alpha = T.reshape(alpha, alpha.shape[:-1] + (1, alpha.shape[-1]))
    c = T.matmul(alpha, fused)
    if squeeze:
        c = T.reshape(c, c.shape[:-2] + (c.shape[-1],))
    return c


def fuse(h, o):
    """Element-wise addition of the topic vector to every encoder state."""
    h = T.as_tensor(h)
    o = T.as_tensor(o)
    if o.data.ndim == h.data.ndim - 1:
        o = T.reshape(o, o.shape[:-1] + (1, o.shape[-1]))
    return T.add(h, o)


def copy_distribution(alpha: np.ndarray, position_map, ext_size: int) -> np.ndarray:
    """Scatter per-position attention onto extended-vocabulary ids."""
    from .nn import kernels

    ids = np.asarray(position_map, dtype=np.int64)
    if alpha.shape[-1] != len(ids):
        raise ValueError("position map does not cover every source position")
    return kernels.copy_scatter(np.asarray(alpha), ids, ext_size)


def final_distribution(p, d_v_padded, d_c):
    """``p * d_v + (1 - p) * d_c`` with ``p`` broadcast over the last axis."""
    p = np.asarray(p)[..., None]
    return p * d_v_padded + (1.0 - p) * d_c


class KeyphraseGenerator:
    """The network. Parameters live in ``self.store``; the document memory,
    when present, is registered in the same store so one optimizer updates
    everything."""

    def __init__(self, config: ModelConfig, vocab_size: int, seed: int = 13,
                 dtype=np.float32):
        self.config = config
        self.vocab_size = vocab_size
        self.seed = seed
        self.store = ParameterStore(dtype)
        self.memory: M.DocumentMemory | None = None
        self.memory_top_k: int | None = None
        self.mask_self = False
        rng = np.random.default_rng(seed)
        self._init_params(rng)

    # -- construction -------------------------------------------------
    def _init_params(self, rng):
        c, s = self.config, self.store
        d = c.hidden_dim
        s.add("embed.tokens", rng.normal(0.0, d ** -0.5, (self.vocab_size, d)))
        s.add("embed.enc_pos", rng.normal(0.0, d ** -0.5, (c.max_input_len, d)))
        s.add("embed.dec_pos", rng.normal(0.0, d ** -0.5, (c.max_target_len, d)))
        for i in range(c.layer_count):
            p = f"enc.{i}"
            L.add_layer_norm(s, f"{p}.ln1", d)
            L.add_attention(s, f"{p}.attn", rng, d)
            L.add_layer_norm(s, f"{p}.ln2", d)
            L.add_feed_forward(s, f"{p}.ffn", rng, d, 4 * d)
        L.add_layer_norm(s, "enc.ln_f", d)
        for i in range(c.layer_count):
            p = f"dec.{i}"
            L.add_layer_norm(s, f"{p}.ln1", d)
            L.add_attention(s, f"{p}.self", rng, d)
            L.add_layer_norm(s, f"{p}.ln2", d)
            L.add_attention(s, f"{p}.cross", rng, d)
            L.add_layer_norm(s, f"{p}.ln3", d)
            L.add_feed_forward(s, f"{p}.ffn", rng, d, 4 * d)
        L.add_layer_norm(s, "dec.ln_f", d)
        L.add_dense(s, "out.w2", rng, 2 * d, d)
        L.add_dense(s, "out.w1", rng, d, self.vocab_size)
        for name in ("gate.c", "gate.s", "gate.y"):
            L.add_dense(s, name, rng, d, 1, bias=False)
        s.add("gate.bias", np.zeros(1))

    def attach_memory(self, memory: M.DocumentMemory) -> None:
        if memory.dim != self.config.hidden_dim:
            raise ConfigError(f"memory dim {memory.dim} != hidden_dim {self.config.hidden_dim}")
        memory.attach(self.store)
        self.memory = memory

    def sentence_encoder(self, vocab: Vocabulary) -> M.MeanEmbeddingEncoder:
        return M.MeanEmbeddingEncoder(vocab, self.store["embed.tokens"].data)

    # -- forward pieces -----------------------------------------------
    def encode(self, src_base, src_mask=None, rng=None, training=False):
        """Encoder states h (B, n, d) for base-vocabulary ids (B, n)."""
        c, s = self.config, self.store
        src_base = np.atleast_2d(src_base)
        b, n = src_base.shape
        if n > c.max_input_len:
            raise ValueError(f"input length {n} exceeds max_input_len {c.max_input_len}")
        if src_mask is None:
            src_mask = np.ones((b, n), dtype=bool)
        tok = T.embedding(s["embed.tokens"], src_base)
        x = T.add(tok, T.embedding(s["embed.enc_pos"], np.arange(n)))
        x = T.dropout(x, c.dropout_rate, rng, training)
        mask = src_mask[:, None, None, :]
        for i in range(c.layer_count):
            p = f"enc.{i}"
            h = L.layer_norm(s, f"{p}.ln1", x)
            a, _ = L.multi_head_attention(s, f"{p}.attn", h, h, h, c.head_count, mask)
            x = T.add(x, T.dropout(a, c.dropout_rate, rng, training))
            f = L.feed_forward(s, f"{p}.ffn", L.layer_norm(s, f"{p}.ln2", x))
            x = T.add(x, T.dropout(f, c.dropout_rate, rng, training))
        return L.layer_norm(s, "enc.ln_f", x)

    def topic(self, src_base, src_mask=None, memory_index=None, disable=False):
        """Topic vector o (B, d) from the attached memory; zeros when disabled."""
        src_base = np.atleast_2d(src_base)
        b = src_base.shape[0]
        d = self.config.hidden_dim
        if disable or self.memory is None:
            return Tensor(np.zeros((b, d), dtype=self.store.dtype))
        e = M.encode_query(src_base, self.store["embed.tokens"], src_mask)
        exclude = memory_index if self.mask_self else None
        p = M.address(e, self.memory, exclude=exclude, top_k=self.memory_top_k)
        return M.topic_vector(p, self.memory)

    def decode(self, prefix_base, fused, src_mask=None, rng=None, training=False):
        """Decoder states s (B, t, d) and head-averaged final-layer
        cross-attention alpha (B, t, n) for every prefix position."""
        c, s = self.config, self.store
        prefix_base = np.atleast_2d(prefix_base)
        b, t = prefix_base.shape
        if t > c.max_target_len:
            raise ValueError(f"prefix length {t} exceeds max_target_len {c.max_target_len}")
        n = fused.shape[1]
        if src_mask is None:
            src_mask = np.ones((fused.shape[0], n), dtype=bool)
        y = T.add(T.embedding(s["embed.tokens"], prefix_base),
                  T.embedding(s["embed.dec_pos"], np.arange(t)))
        x = T.dropout(y, c.dropout_rate, rng, training)
        causal = np.tril(np.ones((t, t), dtype=bool))[None, None]
        cross_mask = src_mask[:, None, None, :]
        weights = None
        for i in range(c.layer_count):
            p = f"dec.{i}"
            h = L.layer_norm(s, f"{p}.ln1", x)
            a, _ = L.multi_head_attention(s, f"{p}.self", h, h, h, c.head_count, causal)
            x = T.add(x, T.dropout(a, c.dropout_rate, rng, training))
            a, weights = L.multi_head_attention(s, f"{p}.cross", L.layer_norm(s, f"{p}.ln2", x),
                                                fused, fused, c.head_count, cross_mask)
            x = T.add(x, T.dropout(a, c.dropout_rate, rng, training))
            f = L.feed_forward(s, f"{p}.ffn", L.layer_norm(s, f"{p}.ln3", x))
            x = T.add(x, T.dropout(f, c.dropout_rate, rng, training))
        alpha = T.mul(T.sum(weights, axis=1), 1.0 / c.head_count)
        return L.layer_norm(s, "dec.ln_f", x), alpha

    def vocab_logits(self, s_t, c_t):
        """z = W1 (W2 (s ++ c)): two stacked linear maps, no nonlinearity."""
        inner = L.dense(self.store, "out.w2", T.concat([s_t, c_t], axis=-1))
        return L.dense(self.store, "out.w1", inner)

    def gate(self, c_t, s_t, y_prev):
        st = self.store
        logit = T.add(T.add(L.dense(st, "gate.c", c_t), L.dense(st, "gate.s", s_t)),
                      T.add(L.dense(st, "gate.y", y_prev), st["gate.bias"]))
        return T.sigmoid(logit)

    # -- training objective -------------------------------------------
    def loss(self, batch: Batch, rng=None, training=False, disable_memory=False,
             disable_copy=False):
        """Mean over target tokens of ``-log(mixture[gold] + 1e-12)``."""
        st = self.store
        V = self.vocab_size
        src_base = batch.src_base
        h = self.encode(src_base, batch.src_mask, rng, training)
        o = self.topic(src_base, batch.src_mask, batch.memory_index, disable_memory)
        fused = fuse(h, o)
        s_t, alpha = self.decode(batch.tgt_in, fused, batch.src_mask, rng, training)
        c_t = context_vector(alpha, fused)
        d_v = T.softmax(self.vocab_logits(s_t, c_t))
        gold = batch.tgt_out
        in_base = (gold < V).astype(st.dtype)
        gen = T.mul(T.take_last(d_v, np.where(gold < V, gold, 0)), in_base)
        if disable_copy:
            prob = gen
        else:
            y_prev = T.embedding(st["embed.tokens"], batch.tgt_in)
            p = T.reshape(self.gate(c_t, s_t, y_prev), gold.shape)
            hits = (batch.src[:, None, :] == gold[:, :, None]) & batch.src_mask[:, None, :]
            copy = T.sum(T.mul(alpha, hits.astype(st.dtype)), axis=-1)
            prob = T.add(T.mul(p, gen), T.mul(T.add(T.mul(p, -1.0), 1.0), copy))
        tok_mask = batch.tgt_mask.astype(st.dtype)
        total = T.sum(T.mul(L.nll(prob), tok_mask))
        return T.mul(total, 1.0 / float(tok_mask.sum()))

    # -- inference ----------------------------------------------------
    def encode_document(self, ex: Example, disable_memory=False):
        """(h, o, fused) for one example, computed once per document."""
        with T.no_grad():
            src_base = to_base(ex.src, self.vocab_size)[None, :]
            h = self.encode(src_base)
            o = self.topic(src_base, memory_index=np.array([ex.memory_index]),
                           disable=disable_memory)
            return h, o, fuse(h, o)

    def decode_step(self, prefixes, fused):
        """Last-position decoder output, attention and previous-token embedding
        for each prefix row (R, t) of base ids starting with BOS."""
        prefixes = np.atleast_2d(prefixes)
        if prefixes.shape[1] < 1 or np.any(prefixes[:, 0] != BOS_ID):
            raise ValueError("prefixes must start with BOS")
        with T.no_grad():
            s_all, alpha_all = self.decode(prefixes, fused)
        s_t = s_all.data[:, -1]
        alpha = alpha_all.data[:, -1]
        y_prev = self.store["embed.tokens"].data[prefixes[:, -1]]
        return s_t, alpha, y_prev

    def distributions(self, s_t, alpha, fused, y_prev, position_map, ext_size,
                      disable_copy=False, block_special=True) -> OutputDistributions:
        with T.no_grad():
            c_t = alpha @ fused.data[0]
            z = self.vocab_logits(Tensor(s_t), Tensor(c_t))
            dv = T.softmax(z).data
            if disable_copy:
                p = np.ones(len(s_t), dtype=dv.dtype)
            else:
                p = self.gate(Tensor(c_t), Tensor(s_t), Tensor(y_prev)).data[:, 0]
        d_v = np.zeros((len(s_t), ext_size), dtype=np.float64)
        d_v[:, : self.vocab_size] = dv
        d_c = copy_distribution(alpha.astype(np.float64), position_map, ext_size)
        mixture = final_distribution(p.astype(np.float64), d_v, d_c)
        if block_special:
            mixture[:, list(BLOCKED_IDS)] = 0.0
        return OutputDistributions(d_v, d_c, p.astype(np.float64), mixture)

    def step_distributions(self, ex: Example, fused, prefixes_base, disable_copy=False,
                           block_special=True) -> OutputDistributions:
        s_t, alpha, y_prev = self.decode_step(prefixes_base, fused)
        return self.distributions(s_t, alpha, fused, y_prev, ex.src, len(ex.ext),
                                  disable_copy, block_special)
