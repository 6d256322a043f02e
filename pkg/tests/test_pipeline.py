import json

import numpy as np
import pytest

from kpgen import cli
from kpgen import pipeline as P
from kpgen.checkpoint import CheckpointError, read_checkpoint, save_checkpoint, load_into
from kpgen.corpus import load_corpus
from kpgen.memory import read_memory_seed

RAW = [
    {"id": "d1", "title": "Neural Keyphrase Generation",
     "abstract": "We generate keyphrases with a copy mechanism and a memory.",
     "keyphrases": ["keyphrase generation", "copy mechanism", "document memory"]},
    {"id": "d2", "title": "Document memory networks",
     "abstract": "Memory networks read a document collection in 2019.",
     "keyphrases": ["memory networks", "keyphrase generation"]},
    {"id": "d3", "title": "Beam search for sequence models",
     "abstract": "Beam search decodes sequences with a copy mechanism.",
     "keyphrases": ["beam search", "copy mechanism"]},
]

CONFIG = """\
# tiny run
corpus = corpus.jsonl
layer_count = 1
head_count = 2
hidden_dim = 16
max_input_len = 32
max_target_len = 12
dropout_rate = 0
beam_size = 3
steps = 4
batch_size = 2
"""


@pytest.fixture
def run_dir(tmp_path):
    with open(tmp_path / "raw.jsonl", "w") as fh:
        for rec in RAW:
            fh.write(json.dumps(rec) + "\n")
    (tmp_path / "run.cfg").write_text(CONFIG)
    return tmp_path


def kpgen(run_dir, *args):
    return cli.main([args[0], "--config", str(run_dir / "run.cfg"), *args[1:]])


def full_run(run_dir, *extra):
    assert kpgen(run_dir, "preprocess", "--input", str(run_dir / "raw.jsonl"),
                 "--output", str(run_dir / "corpus.jsonl")) == 0
    for stage in ("build-vocab", "build-memory", "train", "predict", "eval"):
        assert kpgen(run_dir, stage, *extra) == 0, stage


class TestConfig:
    def test_load(self, run_dir):
        cfg = P.load_config(run_dir / "run.cfg")
        assert cfg.model.hidden_dim == 16 and cfg.beam_size == 3 and cfg.steps == 4
        assert cfg.corpus == str(run_dir / "corpus.jsonl")
        assert cfg.eval_path == cfg.corpus
        assert cfg.report_json().endswith("report.json")

    def test_overrides(self):
        cfg = P.RunConfig().with_overrides({"beam-size": "7", "disable_memory": "yes",
                                            "memory_top_k": "none", "lr": "0.01"})
        assert cfg.beam_size == 7 and cfg.disable_memory and cfg.memory_top_k is None
        assert cfg.lr == 0.01

    @pytest.mark.parametrize("values", [{"bogus": "1"}, {"steps": "many"},
                                        {"disable_copy": "maybe"}, {"hidden_dim": "30"}])
    def test_bad_values(self, values):
        with pytest.raises(P.ConfigError):
            P.RunConfig().with_overrides(values)


class TestStages:
    def test_end_to_end(self, run_dir, capsys):
        full_run(run_dir)
        docs = load_corpus(run_dir / "corpus.jsonl")
        assert [d.id for d in docs] == ["d1", "d2", "d3"]
        assert read_memory_seed(run_dir / "memory.bin") == 13
        log = (run_dir / "loss.log").read_text().splitlines()
        assert log[0].startswith("# seed=13") and len(log) == 5
        recs = P.read_predictions(run_dir / "predictions.jsonl")
        assert [r["id"] for r in recs] == ["d1", "d2", "d3"]
        assert all(r["seed"] == 13 for r in recs)
        report = (run_dir / "report.txt").read_text()
        assert "present.f1@5 = " in report and report.endswith("seed = 13\n")
        mirror = json.loads((run_dir / "report.json").read_text())
        assert mirror["documents"] == 3 and mirror["seed"] == 13

    def test_states(self, run_dir):
        full_run(run_dir)
        assert kpgen(run_dir, "dump-states") == 0
        lines = (run_dir / "states.tsv").read_text().splitlines()
        assert lines[0] == "# seed=13"
        header = lines[1].split("\t")
        assert header[:2] == ["doc_id", "step"] and len(header) == 18
        rows = [ln.split("\t") for ln in lines[2:]]
        assert [(r[0], r[1]) for r in rows] == [(d, str(s)) for d in ("d1", "d2", "d3")
                                               for s in (1, 2, 3)]

    def test_determinism(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            d = tmp_path / name
            d.mkdir()
            (d / "raw.jsonl").write_text("".join(json.dumps(r) + "\n" for r in RAW))
            (d / "run.cfg").write_text(CONFIG)
            full_run(d)
            outputs.append([(d / f).read_bytes() for f in
                            ("predictions.jsonl", "report.txt", "report.json", "model.ckpt")])
        assert outputs[0] == outputs[1]

    def test_seed_changes_outputs(self, run_dir):
        full_run(run_dir)
        first = (run_dir / "model.ckpt").read_bytes()
        assert kpgen(run_dir, "train", "--seed", "14") == 0
        assert (run_dir / "model.ckpt").read_bytes() != first

    def test_zero_steps_checkpoint_is_init(self, run_dir):
        full_run(run_dir, "--steps", "0")
        cfg = P.load_config(run_dir / "run.cfg")
        model, vocab, _ = P.load_trained(cfg)
        fresh = P._new_model(cfg, len(vocab))
        for name, t in fresh.store:
            if not name.startswith("memory."):
                np.testing.assert_array_equal(model.store[name].data, t.data, err_msg=name)

    def test_checkpoint_round_trip(self, run_dir, tmp_path):
        full_run(run_dir)
        cfg = P.load_config(run_dir / "run.cfg")
        model, _, _ = P.load_trained(cfg)
        header, tensors, moments = read_checkpoint(cfg.checkpoint)
        assert header["step"] == 4 and header["seed"] == 13
        assert header["config"]["hidden_dim"] == 16
        path = tmp_path / "again.ckpt"
        save_checkpoint(path, model.store, {k: v for k, v in header.items() if k != "step"})
        assert path.read_bytes() == open(cfg.checkpoint, "rb").read()
        bad = dict(tensors)
        bad.pop(next(iter(bad)))
        with pytest.raises(CheckpointError):
            load_into(model.store, bad)

    def test_gold_predictions_score_perfectly(self, run_dir):
        full_run(run_dir)
        docs = load_corpus(run_dir / "corpus.jsonl")
        gold = [{"id": d.id, "candidates": [" ".join(p) for p in d.gold_keyphrases],
                 "top_beam": [" ".join(p) for p in d.gold_keyphrases]} for d in docs]
        flat = P.score_predictions(docs, gold).flat()
        assert flat["present.f1@O"] == flat["absent.f1@O"] == 1.0
        assert flat["present.mae"] == flat["absent.mae"] == 0.0
        empty = [{"id": d.id, "candidates": [], "top_beam": []} for d in docs]
        assert P.score_predictions(docs, empty).flat()["present.f1@5"] == 0.0

    def test_ablation_flags_recorded(self, run_dir):
        full_run(run_dir, "--disable-memory", "--disable-copy")
        header, _, _ = read_checkpoint(run_dir / "model.ckpt")
        assert header["disable_memory"] and header["disable_copy"]


class TestErrors:
    def test_missing_inputs(self, run_dir, capsys):
        assert kpgen(run_dir, "preprocess", "--input", str(run_dir / "nope.jsonl"),
                     "--output", str(run_dir / "x.jsonl")) == 10
        assert kpgen(run_dir, "build-vocab") == 11
        assert "missing corpus" in capsys.readouterr().err

    @pytest.mark.parametrize("victim,stage,code", [
        ("vocab.txt", "build-memory", 13), ("memory.bin", "train", 14),
        ("model.ckpt", "predict", 15), ("predictions.jsonl", "eval", 16),
    ])
    def test_missing_artifacts(self, run_dir, victim, stage, code):
        full_run(run_dir)
        (run_dir / victim).unlink()
        assert kpgen(run_dir, stage) == code

    def test_missing_eval_corpus(self, run_dir):
        full_run(run_dir)
        assert kpgen(run_dir, "predict", "--set", f"eval_corpus={run_dir / 'gone.jsonl'}") == 12

    def test_bad_config(self, run_dir):
        assert kpgen(run_dir, "build-vocab", "--set", "bogus=1") == 3
        assert kpgen(run_dir, "build-vocab", "--set", "novalue") == 3
        assert cli.main(["build-vocab", "--config", str(run_dir / "absent.cfg")]) == 3

    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_malformed_data(self, run_dir):
        (run_dir / "bad.jsonl").write_text('{"id": "x", "title": "t"\n')
        assert kpgen(run_dir, "preprocess", "--input", str(run_dir / "bad.jsonl"),
                     "--output", str(run_dir / "o.jsonl")) == 4

    def test_config_mismatch(self, run_dir):
        full_run(run_dir)
        assert kpgen(run_dir, "predict", "--set", "hidden_dim=32") == 3

    def test_id_mismatch(self, run_dir, capsys):
        full_run(run_dir)
        recs = P.read_predictions(run_dir / "predictions.jsonl")
        recs[0]["id"] = "zz"
        (run_dir / "predictions.jsonl").write_text("".join(json.dumps(r) + "\n" for r in recs))
        assert kpgen(run_dir, "eval") == 5
        err = capsys.readouterr().err
        assert "d1" in err and "zz" in err

    def test_duplicate_ids(self, run_dir):
        full_run(run_dir)
        docs = load_corpus(run_dir / "corpus.jsonl")
        recs = [{"id": d.id} for d in docs] + [{"id": "d1"}]
        with pytest.raises(P.PipelineError) as exc:
            P.score_predictions(docs, recs)
        assert exc.value.code == 5
