"""Compare the compiled and NumPy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--train-steps N]

Times each kernel on model-sized inputs, then a full training step of a
small model, under every available backend.
"""

import argparse
import time

import numpy as np

from kpgen.nn import kernels as K


def _time(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    rows, d, vocab, n = 2048, 64, 2000, 200
    x = rng.standard_normal((rows, d)).astype(np.float32)
    gain, bias = np.ones(d, np.float32), np.zeros(d, np.float32)
    y, xhat, rstd = K.layer_norm(x, gain, bias)
    att = rng.standard_normal((rows, n)).astype(np.float32)
    p = K.softmax(att)
    ids = rng.integers(0, vocab, n)
    idx = rng.integers(0, vocab, rows)
    table = np.zeros((vocab, d), np.float32)
    return {
        "softmax": lambda: K.softmax(att),
        "softmax_backward": lambda: K.softmax_backward(att, p),
        "layer_norm": lambda: K.layer_norm(x, gain, bias),
        "layer_norm_backward": lambda: K.layer_norm_backward(x, xhat, rstd, gain),
        "gelu": lambda: K.gelu(x),
        "gelu_backward": lambda: K.gelu_backward(x, x),
        "scatter_add_rows": lambda: K.scatter_add_rows(table, idx, x),
        "copy_scatter": lambda: K.copy_scatter(p, ids, vocab + n),
    }


def train_step_case(steps):
    from kpgen import fixtures
    from kpgen.corpus import build_vocabulary, ingest
    from kpgen.memory import build_memory
    from kpgen.model import KeyphraseGenerator, ModelConfig, prepare
    from kpgen.training import fit

    docs = ingest(fixtures.bundled())[:16]
    vocab = build_vocabulary(docs)
    cfg = ModelConfig(layer_count=2, head_count=2, hidden_dim=64, max_input_len=128,
                      dropout_rate=0.0)

    def run():
        model = KeyphraseGenerator(cfg, len(vocab), seed=13)
        mem = build_memory(docs, model.sentence_encoder(vocab), cfg.hidden_dim)
        model.attach_memory(mem)
        exs = [prepare(d, vocab, cfg, mem) for d in docs]
        t0 = time.perf_counter()
        losses = fit(model, exs, steps, batch_size=8)
        return (time.perf_counter() - t0) / steps, losses[-1]

    return run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--train-steps", type=int, default=20)
    args = ap.parse_args()
    backends = K.available_backends()
    results = {}
    for name in backends:
        K.use_backend(name)
        cases = kernel_cases(np.random.default_rng(0))
        results[name] = {k: _time(fn, args.repeat) for k, fn in cases.items()}
        per_step, last = train_step_case(args.train_steps)()
        results[name]["train_step"] = per_step
        results[name]["_loss"] = last
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends)
          + ("     speedup" if len(backends) > 1 else ""))
    for key in results[backends[0]]:
        if key.startswith("_"):
            continue
        row = f"{key:<22}" + "".join(f"{results[b][key] * 1e3:>10.3f}ms" for b in backends)
        if len(backends) > 1:
            row += f"{results['numpy'][key] / results['cython'][key]:>11.2f}x"
        print(row)
    for b in backends:
        print(f"final loss after {args.train_steps} steps [{b}]: {results[b]['_loss']:.6f}")


if __name__ == "__main__":
    main()
