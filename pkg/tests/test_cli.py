import subprocess
import sys

import pytest

from addrtag import synthetic
from addrtag.checkpoint import Checkpoint, save_checkpoint
from addrtag.cli import read_kv, run_cli
from addrtag.data import load_dataset, save_dataset
from addrtag.evaluation import read_report_csv
from addrtag.tagger import AddressTagger, ModelConfig


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.jsonl"
    save_dataset(synthetic.generate("A", 30, 0) + synthetic.generate("B", 30, 1), path)
    return path


@pytest.fixture
def model_file(tmp_path):
    ckpt = Checkpoint.from_model(AddressTagger(ModelConfig(variant="attention", hidden_dim=8), seed=5), seed=5)
    return save_checkpoint(ckpt, tmp_path / "m.ckpt")


def test_parse_prints_one_pair_per_line(model_file, tmp_path, capsys):
    code = run_cli(["parse", "--model", str(model_file), "--embeddings", "fallback",
                    "--out-dir", str(tmp_path / "p"), "221 B Baker Street"])
    out = capsys.readouterr().out.strip().splitlines()
    assert code == 0
    assert [line.split("\t")[0] for line in out] == ["221", "B", "Baker", "Street"]
    names = {"StreetNumber", "StreetName", "Unit", "Municipality", "Province", "PostalCode", "Orientation", "GeneralDelivery"}
    assert all(line.split("\t")[1] in names for line in out)
    assert (tmp_path / "p" / "manifest.txt").exists()


@pytest.mark.parametrize(
    "argv, code",
    [
        (["train", "--variant", "attention", "--adversarial"], 1),
        (["eval", "--suite", "incomplete", "--countries", "JP"], 2),
        (["train", "--no-such-flag"], 1),
        (["frobnicate"], 1),
        ([], 1),
        (["train", "--train", "missing.jsonl"], 2),
        (["parse", "--model", "missing.ckpt", "x"], 3),
        (["eval", "--suite", "zero_shot", "--countries", "US"], 2),
        (["probe-reorder", "--input", "x", "--pattern-a", "Nope", "--pattern-b", "Unit"], 1),
    ],
)
def test_exit_codes(argv, code, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run_cli(argv) == code
    assert capsys.readouterr().err


def test_parse_rejects_wrong_embeddings(model_file, tmp_path):
    assert run_cli(["parse", "--model", str(model_file), "--embeddings", "bpe_combined",
                    "--out-dir", str(tmp_path), "a b"]) == 3


def test_train_eval_report_pipeline(toy_file, tmp_path, capsys):
    run = tmp_path / "run"
    assert run_cli(["train", "--train", str(toy_file), "--hidden-dim", "8", "--epochs", "2",
                    "--batch-size", "16", "--lr", "0.3", "--seeds", "5,10", "--out-dir", str(run)]) == 0
    for seed in (5, 10):
        assert (run / f"seed_{seed}" / "model.ckpt").exists()
    assert (run / "training_curves.png").stat().st_size > 0
    manifest = read_kv(run / "manifest.txt")
    assert manifest["hidden_dim"] == "8" and manifest["seeds"] == "5,10"

    ev = tmp_path / "ev"
    models = [str(run / f"seed_{s}" / "model.ckpt") for s in (5, 10)]
    assert run_cli(["eval", "--suite", "holdout", "--data", str(toy_file), "--model", *models, "--out-dir", str(ev)]) == 0
    rows = read_report_csv(ev / "report.csv")
    assert [r.country for r in rows] == ["KR", "US", "MEAN"]
    assert all(r.n_seeds == 2 for r in rows)
    assert "MEAN" in capsys.readouterr().out

    rep = tmp_path / "rep"
    assert run_cli(["report", "--reports", str(ev / "report.csv"), "--labels", "toy",
                    "--logs", str(run / "seed_5" / "train_log.jsonl"), "--out-dir", str(rep)]) == 0
    assert (rep / "accuracy_by_country.png").stat().st_size > 0
    assert (rep / "training_curves.png").stat().st_size > 0


def test_manifest_reproduces_run(toy_file, tmp_path):
    args = ["train", "--train", str(toy_file), "--hidden-dim", "4", "--epochs", "1", "--seed", "7",
            "--batch-size", "16"]
    assert run_cli(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert run_cli(["train", "--config", str(tmp_path / "a" / "manifest.txt"), "--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "seed_7" / "model.ckpt").read_bytes()
    b = (tmp_path / "b" / "seed_7" / "model.ckpt").read_bytes()
    assert a == b
    ma, mb = read_kv(tmp_path / "a" / "manifest.txt"), read_kv(tmp_path / "b" / "manifest.txt")
    assert {k: v for k, v in ma.items() if k != "out_dir"} == {k: v for k, v in mb.items() if k != "out_dir"}


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("no_such_option=1\n")
    assert run_cli(["train", "--config", str(bad)]) == 1
    bad.write_text("epochs=many\n")
    assert run_cli(["train", "--config", str(bad)]) == 1


def test_make_incomplete_and_probe(toy_file, tmp_path, model_file, capsys):
    out = tmp_path / "inc"
    assert run_cli(["make-incomplete", "--input", str(toy_file), "--train-n", "10", "--holdout-n", "5",
                    "--seed", "3", "--out-dir", str(out)]) == 0
    train = load_dataset(out / "incomplete_train.jsonl")
    assert len(train) == 20
    assert read_kv(out / "results.txt")["count.US.train"] == "10"
    assert run_cli(["make-incomplete", "--input", str(toy_file), "--train-n", "100", "--holdout-n", "5",
                    "--out-dir", str(out)]) == 2

    probe = tmp_path / "probe"
    a = ",".join(t.name for t in synthetic.PATTERN_A)
    c = ",".join(t.name for t in synthetic.PATTERN_C)
    assert run_cli(["probe-reorder", "--input", str(toy_file), "--country", "US", "--pattern-a", a,
                    "--pattern-b", c, "--model", str(model_file), "--out-dir", str(probe)]) == 0
    assert len(load_dataset(probe / "probe.jsonl")) == 30
    assert "reordered probe" in capsys.readouterr().out


def test_console_script_entry_point():
    result = subprocess.run([sys.executable, "-m", "addrtag", "--version"], capture_output=True, text=True)
    assert result.returncode == 0 and "addrtag" in result.stdout
