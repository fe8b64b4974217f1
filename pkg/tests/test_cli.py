"""End-to-end command-line tests: prepare -> train -> eval -> recommend,
plus exit-code mapping and override handling."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from vampcf import training
from vampcf.autodiff import Matrix
from vampcf.checkpoint import load_checkpoint
from vampcf.cli import main
from vampcf.data import load_split, vocab_fingerprint
from vampcf.metrics import ranked_candidates
from vampcf.model import ElboResult, score_items
from vampcf.synthetic import archetype_interactions, write_ratings_csv
from tests.conftest import TINY_MODEL_OVERRIDES, TINY_TRAIN_OVERRIDES

SPLIT_FILES = ["meta.json", "vocab.csv", "train.csv",
               "validation_tr.csv", "validation_te.csv",
               "test_tr.csv", "test_te.csv"]


def read_tree(root):
    out = {}
    for name in sorted(os.listdir(root)):
        with open(os.path.join(root, name), "rb") as f:
            out[name] = f.read()
    return out


class TestPrepare:
    def test_writes_all_split_files(self, split_dir):
        assert sorted(os.listdir(split_dir)) == sorted(SPLIT_FILES)

    def test_prints_diagnostics(self, ratings_file, tmp_path, capsys):
        code = main(["prepare", "--ratings", ratings_file, "--heldout-users",
                     "15", "--seed", "7", "--out", str(tmp_path / "s")])
        assert code == 0
        out = capsys.readouterr().out
        assert "vocab fingerprint:" in out
        assert "90 train / 15 validation / 15 test" in out

    def test_rerun_is_byte_identical(self, ratings_file, tmp_path):
        args = ["prepare", "--ratings", ratings_file, "--heldout-users", "15",
                "--seed", "7"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")

    def test_overwrites_existing_output(self, ratings_file, tmp_path):
        out = str(tmp_path / "s")
        args = ["prepare", "--ratings", ratings_file, "--heldout-users", "15",
                "--out", out]
        assert main(args) == 0
        assert main(args) == 0
        assert sorted(os.listdir(out)) == sorted(SPLIT_FILES)

    def test_missing_ratings_file_exits_2(self, tmp_path, capsys):
        code = main(["prepare", "--ratings", str(tmp_path / "nope.csv"),
                     "--heldout-users", "5", "--out", str(tmp_path / "s")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_missing_required_flag_exits_1(self, capsys):
        assert main(["prepare", "--heldout-users", "5", "--out", "x"]) == 1
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_writes_checkpoint_and_log(self, trained_run, split_dir):
        ckpt = os.path.join(trained_run, "model.ckpt")
        log = os.path.join(trained_run, "train_log.jsonl")
        assert os.path.exists(ckpt) and os.path.exists(log)
        records = [json.loads(line) for line in open(log, encoding="utf-8")]
        assert len(records) == 2
        assert {"epoch", "mean_elbo", "beta", "val_metric"} <= records[0].keys()

        params, extra = load_checkpoint(ckpt)
        ds = load_split(split_dir)
        assert params.config.n_items == ds.n_items
        assert params.config.n_pseudo == 3
        assert extra["vocab_fingerprint"] == vocab_fingerprint(ds.vocab)
        assert extra["eval_metric"] == "ndcg@10"
        assert 0 <= extra["best_epoch"] < 2

    def test_set_overrides_beat_config_file(self, split_dir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[model]\nprior = standard\nhidden = 16\n"
                       "d_z1 = 4\nd_z2 = 4\nk = 3\n"
                       "[train]\nmax_epochs = 1\nbatch_size = 64\n"
                       "eval_metric = ndcg@10\n")
        out = str(tmp_path / "run")
        code = main(["train", "--config", str(cfg), "--data", split_dir,
                     "--out", out, "--quiet",
                     "--set", "model.K=7", "--set", "model.prior=vamp"])
        assert code == 0
        params, _ = load_checkpoint(os.path.join(out, "model.ckpt"))
        assert params.config.n_pseudo == 7
        assert params.config.prior == "vamp"

    def test_beta_cap_out_of_range_exits_1(self, split_dir, tmp_path, capsys):
        code = main(["train", "--data", split_dir, "--out", str(tmp_path / "r"),
                     "--set", "train.beta_cap=1.5"])
        assert code == 1
        err = capsys.readouterr().err
        assert "beta_cap" in err and "[0, 1]" in err

    def test_unknown_config_key_exits_1(self, split_dir, tmp_path, capsys):
        code = main(["train", "--data", split_dir, "--out", str(tmp_path / "r"),
                     "--set", "model.widgets=3"])
        assert code == 1
        assert "unknown key" in capsys.readouterr().err

    def test_unknown_section_exits_1(self, split_dir, tmp_path, capsys):
        code = main(["train", "--data", split_dir, "--out", str(tmp_path / "r"),
                     "--set", "tarin.seed=1"])
        assert code == 1
        assert "unknown config section" in capsys.readouterr().err

    def test_malformed_override_exits_1(self, capsys):
        assert main(["train", "--set", "model.k"]) == 1
        assert "section.key=value" in capsys.readouterr().err

    def test_no_split_dir_anywhere_exits_1(self, capsys):
        assert main(["train"]) == 1
        assert "no split directory" in capsys.readouterr().err

    def test_nonexistent_split_dir_exits_2(self, tmp_path, capsys):
        code = main(["train", "--data", str(tmp_path / "missing"),
                     "--out", str(tmp_path / "r")])
        assert code == 2
        assert "meta.json" in capsys.readouterr().err

    def test_numerical_abort_exits_3(self, split_dir, tmp_path, capsys,
                                     monkeypatch):
        inf = Matrix(np.array([[np.inf]]))
        zero = Matrix(np.zeros((1, 1)))

        def bad_elbo(x, params, beta, **kw):
            return ElboResult(elbo=inf, recon=zero, kl_z1=zero, kl_z2_ce=zero)

        monkeypatch.setattr(training, "elbo", bad_elbo)
        code = main(["train", "--data", split_dir, "--out", str(tmp_path / "r"),
                     "--quiet", *TINY_MODEL_OVERRIDES, *TINY_TRAIN_OVERRIDES])
        assert code == 3
        assert "non-finite loss" in capsys.readouterr().err
        # checkpoint of the best (here: initial) snapshot is still written
        assert os.path.exists(tmp_path / "r" / "model.ckpt")


class TestEval:
    def test_writes_reports(self, trained_run, split_dir, tmp_path, capsys):
        out = str(tmp_path / "rep")
        code = main(["eval", "--checkpoint",
                     os.path.join(trained_run, "model.ckpt"),
                     "--data", split_dir, "--ks", "5,10", "--out", out])
        assert code == 0
        with open(os.path.join(out, "metrics_test.json"), encoding="utf-8") as f:
            report = json.load(f)
        rows = [(r["metric"], r["k"]) for r in report["rows"]]
        assert rows == [("ndcg", 5), ("ndcg", 10), ("recall", 5), ("recall", 10)]
        assert report["n_users"] == 15
        text = open(os.path.join(out, "metrics_test.txt"), encoding="utf-8").read()
        assert "NDCG@10" in text
        assert "NDCG@10" in capsys.readouterr().out

    def test_validation_split_flag(self, trained_run, split_dir, tmp_path):
        out = str(tmp_path / "rep")
        code = main(["eval", "--checkpoint",
                     os.path.join(trained_run, "model.ckpt"),
                     "--data", split_dir, "--split", "validation",
                     "--ks", "10", "--out", out])
        assert code == 0
        assert os.path.exists(os.path.join(out, "metrics_validation.json"))

    def test_split_dir_can_come_from_config(self, trained_run, split_dir,
                                            tmp_path):
        cfg = tmp_path / "eval.cfg"
        cfg.write_text(f"[data]\nsplit_dir = {split_dir}\n")
        code = main(["eval", "--checkpoint",
                     os.path.join(trained_run, "model.ckpt"),
                     "--config", str(cfg), "--ks", "10",
                     "--out", str(tmp_path / "rep")])
        assert code == 0

    def test_reports_are_deterministic(self, trained_run, split_dir, tmp_path):
        ckpt = os.path.join(trained_run, "model.ckpt")
        for name in ("a", "b"):
            assert main(["eval", "--checkpoint", ckpt, "--data", split_dir,
                         "--ks", "5,10", "--out", str(tmp_path / name)]) == 0
        assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")

    def test_per_user_csv(self, trained_run, split_dir, tmp_path):
        csv_path = str(tmp_path / "per_user.csv")
        code = main(["eval", "--checkpoint",
                     os.path.join(trained_run, "model.ckpt"),
                     "--data", split_dir, "--ks", "10",
                     "--out", str(tmp_path / "rep"), "--csv", csv_path])
        assert code == 0
        lines = open(csv_path, encoding="utf-8").read().strip().split("\n")
        # header + one row per (user, metric, k): 15 users x {ndcg, recall}
        assert len(lines) == 1 + 15 * 2

    def test_vocab_mismatch_names_both_fingerprints(self, trained_run,
                                                    tmp_path, capsys):
        other = archetype_interactions(n_users=80, n_items=50, n_archetypes=2,
                                       seed=11, min_items=8, max_items=15)
        ratings2 = tmp_path / "other.csv"
        write_ratings_csv(other, str(ratings2))
        split2 = str(tmp_path / "split2")
        assert main(["prepare", "--ratings", str(ratings2), "--heldout-users",
                     "10", "--out", split2]) == 0
        capsys.readouterr()

        code = main(["eval", "--checkpoint",
                     os.path.join(trained_run, "model.ckpt"),
                     "--data", split2, "--out", str(tmp_path / "rep")])
        assert code == 1
        err = capsys.readouterr().err
        _, extra = load_checkpoint(os.path.join(trained_run, "model.ckpt"))
        assert extra["vocab_fingerprint"] in err
        assert vocab_fingerprint(load_split(split2).vocab) in err

    def test_missing_checkpoint_exits_2(self, split_dir, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"),
                     "--data", split_dir])
        assert code == 2


class TestRecommend:
    def run(self, trained_run, split_dir, items, top_n=5, extra=()):
        return main(["recommend", "--checkpoint",
                     os.path.join(trained_run, "model.ckpt"),
                     "--data", split_dir, "--items", items,
                     "--top-n", str(top_n), *extra])

    def test_history_excluded_and_scores_sorted(self, trained_run, split_dir,
                                                capsys):
        vocab = load_split(split_dir).vocab
        history = [vocab[0], vocab[3], vocab[7]]
        assert self.run(trained_run, split_dir, ",".join(history)) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 5
        ids = [line.split("\t")[0] for line in lines]
        scores = [float(line.split("\t")[1]) for line in lines]
        assert not set(ids) & set(history)
        assert scores == sorted(scores, reverse=True)

    def test_matches_direct_scoring(self, trained_run, split_dir, capsys):
        ds = load_split(split_dir)
        history_idx = [0, 3, 7]
        params, _ = load_checkpoint(os.path.join(trained_run, "model.ckpt"))
        x = np.zeros((1, ds.n_items))
        x[0, history_idx] = 1.0
        scores = score_items(Matrix(x), params).data[0]
        expect = [ds.vocab[i]
                  for i in ranked_candidates(scores, set(history_idx))[:5]]

        items = ",".join(ds.vocab[i] for i in history_idx)
        assert self.run(trained_run, split_dir, items) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert [line.split("\t")[0] for line in lines] == expect

    def test_unknown_item_warned_and_dropped(self, trained_run, split_dir,
                                             capsys):
        vocab = load_split(split_dir).vocab
        assert self.run(trained_run, split_dir, f"{vocab[0]},zzz") == 0
        captured = capsys.readouterr()
        assert "unknown item id 'zzz'" in captured.err
        assert len(captured.out.strip().split("\n")) == 5

    def test_all_items_unknown_exits_2(self, trained_run, split_dir, capsys):
        assert self.run(trained_run, split_dir, "zzz,yyy") == 2
        assert "no usable items" in capsys.readouterr().err

    def test_full_history_leaves_no_candidates(self, trained_run, split_dir,
                                               capsys):
        vocab = load_split(split_dir).vocab
        assert self.run(trained_run, split_dir, ",".join(vocab)) == 0
        assert capsys.readouterr().out == ""


class TestGradcheckCommand:
    def test_grid_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert out.count(" pass") == 12
        assert "all 12 grid cells" in out

    def test_corrupted_cell_is_named(self, capsys):
        cell = "flat-standard-gated-multinomial"
        assert main(["gradcheck", "--corrupt-cell", cell]) == 3
        captured = capsys.readouterr()
        assert f"gradient check failed: {cell}" in captured.err
        assert captured.out.count(" pass") == 11
        assert captured.out.count("FAIL") == 1


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "vampcf", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        for command in ("prepare", "train", "eval", "recommend", "gradcheck"):
            assert command in proc.stdout

    def test_console_script(self):
        proc = subprocess.run(["vampcf", "--help"], capture_output=True,
                              text=True)
        assert proc.returncode == 0
        assert "prepare" in proc.stdout

    def test_no_command_exits_1(self, capsys):
        assert main([]) == 1
        capsys.readouterr()

    def test_unknown_command_exits_1(self, capsys):
        assert main(["transmogrify"]) == 1
        assert "invalid choice" in capsys.readouterr().err
