"""Command-line entry point: ``kpgen <stage> --config run.cfg [overrides]``.

Exit codes: 0 success, 2 usage, 3 configuration error, 4 malformed data,
5 prediction/corpus id mismatch, 10-16 a required input file is missing
(input, corpus, eval corpus, vocab, memory, checkpoint, predictions).
Log verbosity comes from ``KPGEN_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline as P
from .corpus import CorpusError
from .memory import MemoryConfigError
from .model import ConfigError

STAGES = ("preprocess", "build-vocab", "build-memory", "train", "predict", "eval",
          "dump-states")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--beam-size", type=int)
    common.add_argument("--steps", type=int)
    common.add_argument("--seed", type=int, help="seed for all randomness (default 13)")
    common.add_argument("--disable-memory", action="store_true", default=None,
                        help="zero topic vector")
    common.add_argument("--disable-copy", action="store_true", default=None,
                        help="generate from the vocabulary only")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")

    parser = argparse.ArgumentParser(prog="kpgen", description="Keyphrase generation pipeline")
    sub = parser.add_subparsers(dest="stage", required=True)
    pre = sub.add_parser("preprocess", parents=[common], help="clean raw records")
    pre.add_argument("--input", required=True)
    pre.add_argument("--output", required=True)
    for name in STAGES[1:]:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args) -> P.RunConfig:
    cfg = P.load_config(args.config) if args.config else P.RunConfig()
    values = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        values[key.strip()] = val.strip()
    for key in ("beam_size", "steps", "seed", "disable_memory", "disable_copy"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    return cfg.with_overrides(values) if values else cfg


def run(args) -> int:
    cfg = resolve_config(args)
    if args.stage == "preprocess":
        n = P.run_preprocess(args.input, args.output)
        print(f"wrote {n} documents to {args.output}")
    elif args.stage == "build-vocab":
        vocab = P.run_build_vocab(cfg)
        print(f"wrote {len(vocab)} tokens to {cfg.vocab}")
    elif args.stage == "build-memory":
        mem = P.run_build_memory(cfg)
        print(f"wrote {len(mem)} entries ({int(mem.trainable.sum())} trainable) to {cfg.memory}")
    elif args.stage == "train":
        losses = P.run_train(cfg)
        tail = f", final loss {losses[-1]:.4f}" if losses else ""
        print(f"trained {len(losses)} steps{tail}; checkpoint {cfg.checkpoint}")
    elif args.stage == "predict":
        recs = P.run_predict(cfg)
        print(f"wrote {len(recs)} predictions to {cfg.predictions}")
    elif args.stage == "eval":
        report = P.run_eval(cfg)
        sys.stdout.write(report.to_text())
    elif args.stage == "dump-states":
        states = P.dump_decoder_states(cfg)
        print(f"wrote {len(states)} state rows to {cfg.states}")
    return P.EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("KPGEN_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except P.PipelineError as exc:
        print(f"kpgen: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, MemoryConfigError) as exc:
        print(f"kpgen: configuration error: {exc}", file=sys.stderr)
        return P.EXIT_CONFIG
    except CorpusError as exc:
        print(f"kpgen: bad data: {exc}", file=sys.stderr)
        return P.EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
