import json
import re

import numpy as np
import pytest

from spandep.cli import cli
from spandep.formats import (
    load_model,
    ontology_to_dict,
    read_frames,
    read_sdp,
    save_model,
)
from spandep.model import ModelConfig, ParserModel
from spandep.pruning import load_pruner
from spandep.synthetic import synthetic_corpus
from spandep.formats import write_frames, write_sdp


@pytest.fixture(scope="module")
def corpus():
    return synthetic_corpus(np.random.default_rng(3), n_fn=3, n_dm=3,
                            n_fn_dev=2, n_dm_dev=2)


@pytest.fixture()
def paths(corpus, tmp_path):
    out = {"dir": tmp_path}
    out["ontology"] = tmp_path / "ontology.json"
    out["ontology"].write_text(
        json.dumps(ontology_to_dict(corpus["ontology"])), encoding="utf-8")
    for name in ("fn_train", "fn_dev"):
        out[name] = tmp_path / f"{name}.jsonl"
        write_frames(corpus[name], out[name])
    for name in ("dm_train", "dm_dev"):
        out[name] = tmp_path / f"{name}.sdp"
        write_sdp(corpus[name], out[name])
    return out


class TestArgumentHandling:
    def test_help_exits_zero(self, capsys):
        assert cli(["--help"]) == 0
        assert "train" in capsys.readouterr().out

    def test_unknown_flag_prints_usage(self, capsys):
        rc = cli(["oracle-check", "--bogus", "1"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "usage" in err and "error" in err

    def test_missing_subcommand(self, capsys):
        assert cli([]) == 1

    def test_train_requires_ontology(self, paths, capsys):
        rc = cli(["train", "--fn-train", str(paths["fn_train"]),
                  "--out", str(paths["dir"] / "m.zip")])
        assert rc == 1
        assert "--ontology" in capsys.readouterr().err

    def test_missing_input_file_is_validation_error(self, paths, capsys):
        rc = cli(["evaluate", "--task", "sdp",
                  "--gold", str(paths["dir"] / "absent.sdp"),
                  "--pred", str(paths["dm_train"])])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_internal_error_exits_two(self, paths, capsys, monkeypatch):
        import spandep.cli as cli_mod
        monkeypatch.setattr(cli_mod, "read_sdp",
                            lambda path: (_ for _ in ()).throw(RuntimeError("boom")))
        rc = cli(["evaluate", "--task", "sdp",
                  "--gold", str(paths["dm_train"]),
                  "--pred", str(paths["dm_train"])])
        assert rc == 2
        assert "internal error" in capsys.readouterr().err


class TestEvaluate:
    def test_identical_fn_prints_perfect_f1(self, paths, capsys):
        rc = cli(["evaluate", "--task", "fn",
                  "--gold", str(paths["fn_train"]),
                  "--pred", str(paths["fn_train"]),
                  "--ontology", str(paths["ontology"])])
        assert rc == 0
        out = capsys.readouterr().out
        assert "F1 1.000" in out
        assert "frame_accuracy 1.000" in out

    def test_identical_sdp_prints_perfect_f1(self, paths, capsys):
        rc = cli(["evaluate", "--task", "sdp",
                  "--gold", str(paths["dm_train"]),
                  "--pred", str(paths["dm_train"])])
        assert rc == 0
        assert "F1 1.000" in capsys.readouterr().out

    def test_fn_requires_ontology(self, paths, capsys):
        rc = cli(["evaluate", "--task", "fn",
                  "--gold", str(paths["fn_train"]),
                  "--pred", str(paths["fn_train"])])
        assert rc == 1
        assert "--ontology" in capsys.readouterr().err


class TestOracleCheck:
    def test_hundred_instances_within_tolerance(self, capsys):
        rc = cli(["oracle-check", "--n", "100", "--seed", "7"])
        assert rc == 0
        out = capsys.readouterr().out
        m = re.search(r"max objective gap (\S+)", out)
        assert m and float(m.group(1)) <= 1e-6

    def test_impossible_tolerance_fails(self, capsys):
        rc = cli(["oracle-check", "--n", "5", "--seed", "0",
                  "--tolerance", "0"])
        out = capsys.readouterr()
        gap = float(re.search(r"max objective gap (\S+)", out.out).group(1))
        assert (rc == 0) == (gap == 0.0)


class TestTrainPredictRoundTrip:
    def train_args(self, paths, out, extra=()):
        return ["train",
                "--fn-train", str(paths["fn_train"]),
                "--fn-dev", str(paths["fn_dev"]),
                "--dm-train", str(paths["dm_train"]),
                "--dm-dev", str(paths["dm_dev"]),
                "--ontology", str(paths["ontology"]),
                "--out", str(out),
                "--epochs", "1", "--seed", "0", "--word-dropout", "0",
                *extra]

    def test_full_workflow(self, paths, capsys):
        model_path = paths["dir"] / "model.zip"
        log_path = paths["dir"] / "log.tsv"
        rc = cli(self.train_args(paths, model_path,
                                 ("--log", str(log_path))))
        assert rc == 0, capsys.readouterr().err
        out = capsys.readouterr().out
        assert "saved model" in out
        assert model_path.exists()
        assert len(log_path.read_text().splitlines()) == 1

        pred_fn = paths["dir"] / "pred.jsonl"
        rc = cli(["predict", "--model", str(model_path),
                  "--input", str(paths["fn_dev"]), "--format", "fn",
                  "--output", str(pred_fn)])
        assert rc == 0
        model = load_model(model_path)
        assert len(read_frames(pred_fn, model.ontology)) == 2

        rc = cli(["evaluate", "--task", "fn",
                  "--gold", str(paths["fn_dev"]), "--pred", str(pred_fn),
                  "--ontology", str(paths["ontology"])])
        assert rc == 0
        assert re.search(r"F1 [01]\.\d{3}", capsys.readouterr().out)

        pred_sdp = paths["dir"] / "pred.sdp"
        rc = cli(["predict", "--model", str(model_path),
                  "--input", str(paths["dm_dev"]), "--format", "sdp",
                  "--output", str(pred_sdp)])
        assert rc == 0
        assert len(read_sdp(pred_sdp)) == 2

        rc = cli(["evaluate", "--task", "sdp",
                  "--gold", str(paths["dm_dev"]), "--pred", str(pred_sdp)])
        assert rc == 0

        bk = paths["dir"] / "breakdown.csv"
        lb = paths["dir"] / "lengths.csv"
        rc = cli(["export-analysis", "--gold", str(paths["fn_dev"]),
                  "--pred", str(pred_fn),
                  "--ontology", str(paths["ontology"]),
                  "--error-breakdown", str(bk), "--length-bins", str(lb)])
        assert rc == 0
        assert bk.read_text().splitlines()[0] == "category,count,percent"
        assert lb.read_text().splitlines()[0] == "bin,precision,recall,count"

    def test_embeddings_flag(self, paths, corpus, capsys):
        emb = paths["dir"] / "vectors.txt"
        dim = ModelConfig().word_dim
        word = corpus["fn_train"][0].forms[0]
        emb.write_text(f"{word} " + " ".join(["0.01"] * dim) + "\n",
                       encoding="utf-8")
        model_path = paths["dir"] / "emb-model.zip"
        rc = cli(self.train_args(paths, model_path,
                                 ("--embeddings", str(emb), "--no-joint",
                                  "--no-cross-task")))
        assert rc == 0, capsys.readouterr().err
        assert model_path.exists()


class TestPredictEnsemble:
    def test_requires_exactly_one_source(self, paths, capsys):
        rc = cli(["predict", "--input", str(paths["fn_dev"]),
                  "--format", "fn", "--output", str(paths["dir"] / "x")])
        assert rc == 1
        rc = cli(["predict", "--model", "a", "--ensemble", "a,b",
                  "--input", str(paths["fn_dev"]),
                  "--format", "fn", "--output", str(paths["dir"] / "x")])
        assert rc == 1

    def test_identical_members_match_single_model(self, paths, corpus,
                                                  capsys):
        tiny = ModelConfig(word_dim=4, lemma_dim=2, pos_dim=2, mlp_dim=3,
                           rank=2, label_dim=2, bilstm_layers=1,
                           bilstm_dim=4, word_dropout=0.0)
        model = ParserModel.build(
            tiny, corpus["ontology"], corpus["dep_labels"],
            list(corpus["fn_train"]) + list(corpus["dm_train"]),
            np.random.default_rng(0))
        a = paths["dir"] / "a.zip"
        b = paths["dir"] / "b.zip"
        save_model(model, a)
        save_model(model, b)
        single = paths["dir"] / "single.jsonl"
        double = paths["dir"] / "double.jsonl"
        assert cli(["predict", "--model", str(a),
                    "--input", str(paths["fn_dev"]), "--format", "fn",
                    "--output", str(single)]) == 0
        assert cli(["predict", "--ensemble", f"{a},{b}",
                    "--input", str(paths["fn_dev"]), "--format", "fn",
                    "--output", str(double)]) == 0
        assert single.read_bytes() == double.read_bytes()


class TestPretrainPruner:
    def test_span_pruner(self, paths, capsys):
        out = paths["dir"] / "span.zip"
        rc = cli(["pretrain-pruner", "--kind", "span",
                  "--train", str(paths["fn_train"]),
                  "--ontology", str(paths["ontology"]),
                  "--out", str(out), "--epochs", "1"])
        assert rc == 0, capsys.readouterr().err
        pruner = load_pruner(out)
        assert all(name.startswith(("pr.", "enc")) for name in
                   pruner.store.values)

    def test_arc_pruner(self, paths, capsys):
        out = paths["dir"] / "arc.zip"
        rc = cli(["pretrain-pruner", "--kind", "arc",
                  "--train", str(paths["dm_train"]),
                  "--out", str(out), "--epochs", "1"])
        assert rc == 0, capsys.readouterr().err
        load_pruner(out)

    def test_span_requires_ontology(self, paths, capsys):
        rc = cli(["pretrain-pruner", "--kind", "span",
                  "--train", str(paths["fn_train"]),
                  "--out", str(paths["dir"] / "p.zip")])
        assert rc == 1
        assert "--ontology" in capsys.readouterr().err


class TestExportAnalysis:
    def test_requires_an_output(self, paths, capsys):
        rc = cli(["export-analysis", "--gold", str(paths["fn_train"]),
                  "--pred", str(paths["fn_train"]),
                  "--ontology", str(paths["ontology"])])
        assert rc == 1
        assert "--error-breakdown" in capsys.readouterr().err

    def test_perfect_prediction_breakdown(self, paths, capsys):
        bk = paths["dir"] / "bk.csv"
        rc = cli(["export-analysis", "--gold", str(paths["fn_train"]),
                  "--pred", str(paths["fn_train"]),
                  "--ontology", str(paths["ontology"]),
                  "--error-breakdown", str(bk)])
        assert rc == 0
        rows = bk.read_text().splitlines()
        assert all(row.split(",")[1] == "0" for row in rows[1:])
