"""Cross-document key/value memory: addressing and topic readout.

Every document of the collection owns one key vector (compared with the
query document's sentential encoding) and one value vector (mixed into the
topic vector). Both start from the same sentential encoding and are trained
with the rest of the model; entries for documents outside the training split
stay frozen.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .nn import tensor as T
from .nn.params import ParameterStore
from .nn.tensor import Tensor

MAGIC = b"KPGMEM\x00\x02"


class MemoryConfigError(ValueError):
    """Configuration or file-format problem with a document memory."""


@dataclass
class DocumentMemory:
    doc_ids: list[str]
    keys: Tensor
    values: Tensor
    trainable: np.ndarray

    def __post_init__(self):
        if len(self.doc_ids) < 1:
            raise MemoryConfigError("memory needs at least one document")
        l, d = self.keys.shape
        if self.values.shape != (l, d) or len(self.doc_ids) != l or len(self.trainable) != l:
            raise MemoryConfigError("keys, values and doc ids are misaligned")
        self._index = {k: i for i, k in enumerate(self.doc_ids)}

    @property
    def dim(self) -> int:
        return self.keys.shape[1]

    def __len__(self) -> int:
        return len(self.doc_ids)

    def index(self, doc_id: str) -> int:
        return self._index.get(doc_id, -1)

    def attach(self, store: ParameterStore) -> None:
        """Register keys/values as trainable parameters of ``store``."""
        if "memory.keys" in store:
            store.params["memory.keys"].data[...] = self.keys.data
            store.params["memory.values"].data[...] = self.values.data
        else:
            store.add("memory.keys", self.keys.data)
            store.add("memory.values", self.values.data)
        self.keys = store["memory.keys"]
        self.values = store["memory.values"]
        store.frozen_rows["memory.keys"] = ~self.trainable
        store.frozen_rows["memory.values"] = ~self.trainable


def mean_embedding(token_ids, table, mask=None) -> Tensor:
    """Masked mean of embedding rows: ``ids`` (B, n) -> (B, d).

    ``table`` may be a Tensor (differentiable) or a plain array.
    """
    ids = np.asarray(token_ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("cannot encode a document with an empty source")
    table = table if isinstance(table, Tensor) else Tensor(np.asarray(table))
    emb = T.embedding(table, ids)
    weights = (mask / counts[:, None]).astype(table.data.dtype)[:, :, None]
    return T.sum(T.mul(emb, weights), axis=1)


def encode_query(token_ids, table, mask=None) -> Tensor:
    """Sentential encoding of a document: mean of its source-token embeddings."""
    return mean_embedding(token_ids, table, mask)


def address(e: Tensor, mem: DocumentMemory, exclude=None, top_k: int | None = None) -> Tensor:
    """Softmax over ``e . u_k`` for every memory entry; ``e`` is (B, d).

    ``exclude`` (length-B indices, -1 for none) masks each query's own entry.
    ``top_k`` keeps the k largest logits and renormalizes over them.
    """
    if e.shape[-1] != mem.dim:
        raise MemoryConfigError(f"query dim {e.shape[-1]} != memory dim {mem.dim}")
    logits = T.matmul(e, T.transpose(mem.keys, (1, 0)))
    if not np.all(np.isfinite(logits.data)):
        raise FloatingPointError("non-finite addressing logits")
    mask = None
    b, l = logits.shape
    if exclude is not None:
        exclude = np.asarray(exclude)
        mask = np.ones((b, l), dtype=bool)
        rows = np.nonzero(exclude >= 0)[0]
        mask[rows, exclude[rows]] = False
    if top_k is not None and top_k < l:
        scores = logits.data if mask is None else np.where(mask, logits.data, -np.inf)
        kth = np.sort(scores, axis=1)[:, l - top_k][:, None]
        keep = scores >= kth
        mask = keep if mask is None else (mask & keep)
    return T.softmax(logits, mask)


def topic_vector(p: Tensor, mem: DocumentMemory) -> Tensor:
    """``o = sum_k p_k v_k``; ``p`` is (B, l)."""
    if p.shape[-1] != len(mem):
        raise MemoryConfigError(f"weight length {p.shape[-1]} != memory size {len(mem)}")
    return T.matmul(p, mem.values)


Encoder = Callable[[Sequence], np.ndarray]


def build_memory(docs: Sequence, encoder: Encoder, dim: int, trainable=None,
                 dtype=np.float32) -> DocumentMemory:
    """One entry per document; keys and values both start at the encoder output."""
    if not docs:
        raise MemoryConfigError("no documents to build a memory from")
    vecs = np.asarray(encoder(docs), dtype=np.float64)
    if vecs.shape != (len(docs), dim):
        raise MemoryConfigError(f"encoder produced {vecs.shape}, model expects (*, {dim})")
    if trainable is None:
        trainable = np.ones(len(docs), dtype=bool)
    return DocumentMemory(
        [d.id for d in docs],
        Tensor(vecs.astype(dtype)),
        Tensor(vecs.astype(dtype).copy()),
        np.asarray(trainable, dtype=bool),
    )


class MeanEmbeddingEncoder:
    """Fallback sentential encoder: mean of word embeddings over source tokens."""

    def __init__(self, vocab, table: np.ndarray):
        self.vocab = vocab
        self.table = np.asarray(table, dtype=np.float64)

    def __call__(self, docs) -> np.ndarray:
        out = np.empty((len(docs), self.table.shape[1]))
        for i, doc in enumerate(docs):
            ids = [self.vocab.id(w) for w in doc.source_tokens]
            if not ids:
                raise ValueError(f"cannot encode {doc.id}: empty source")
            out[i] = self.table[ids].mean(axis=0)
        return out


def save_memory(mem: DocumentMemory, path, seed: int = 0) -> None:
    """Binary layout: magic, dim, l, seed, (id, trainable) table, keys, values
    (little-endian f32)."""
    l, d = mem.keys.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", d, l, seed))
        for doc_id, flag in zip(mem.doc_ids, mem.trainable):
            raw = doc_id.encode("utf-8")
            fh.write(struct.pack("<HB", len(raw), int(flag)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(mem.keys.data, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(mem.values.data, dtype="<f4").tobytes())


def read_memory_seed(path) -> int:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise MemoryConfigError(f"{path}: not a memory file (bad magic)")
        return struct.unpack("<III", fh.read(12))[2]


def load_memory(path, dtype=np.float32) -> DocumentMemory:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise MemoryConfigError(f"{path}: not a memory file (bad magic)")
        d, l, _ = struct.unpack("<III", fh.read(12))
        ids, flags = [], []
        for _ in range(l):
            n, flag = struct.unpack("<HB", fh.read(3))
            ids.append(fh.read(n).decode("utf-8"))
            flags.append(bool(flag))
        keys = np.frombuffer(fh.read(4 * l * d), dtype="<f4").reshape(l, d)
        values = np.frombuffer(fh.read(4 * l * d), dtype="<f4").reshape(l, d)
    return DocumentMemory(ids, Tensor(keys.astype(dtype)), Tensor(values.astype(dtype)),
                          np.array(flags, dtype=bool))
