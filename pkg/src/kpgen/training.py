"""Teacher-forced training loop."""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from .model import Example, KeyphraseGenerator, make_batch
from .nn.params import adam_step

log = logging.getLogger(__name__)


def train_step(model: KeyphraseGenerator, examples: Sequence[Example], lr: float = 1e-4,
               rng: np.random.Generator | None = None, training: bool = True,
               disable_memory: bool = False, disable_copy: bool = False) -> float:
    """One Adam step on a batch; returns the batch loss before the update."""
    if not examples:
        raise ValueError("empty batch")
    batch = make_batch(examples, model.vocab_size)
    model.store.zero_grad()
    loss = model.loss(batch, rng=rng, training=training, disable_memory=disable_memory,
                      disable_copy=disable_copy)
    loss.backward()
    adam_step(model.store, lr=lr)
    return float(loss.data)


def batches(examples: Sequence[Example], batch_size: int, rng: np.random.Generator):
    """Endless shuffled batches; each window of four batches is sorted by
    source length so similar lengths share padding."""
    n = len(examples)
    window = 4 * batch_size
    while True:
        order = rng.permutation(n)
        for start in range(0, n, window):
            chunk = sorted(order[start : start + window], key=lambda i: len(examples[i].src))
            for b in range(0, len(chunk), batch_size):
                yield [examples[i] for i in chunk[b : b + batch_size]]


def fit(model: KeyphraseGenerator, examples: Sequence[Example], steps: int, batch_size: int = 8,
        lr: float = 1e-4, rng: np.random.Generator | None = None,
        disable_memory: bool = False, disable_copy: bool = False,
        callback: Callable[[int, float], None] | None = None) -> list[float]:
    """Run ``steps`` optimizer steps and return the per-step losses."""
    rng = rng if rng is not None else np.random.default_rng(model.seed)
    losses = []
    stream = batches(examples, batch_size, rng)
    training = model.config.dropout_rate > 0
    for step in range(1, steps + 1):
        loss = train_step(model, next(stream), lr, rng, training, disable_memory, disable_copy)
        losses.append(loss)
        if callback is not None:
            callback(step, loss)
    return losses
