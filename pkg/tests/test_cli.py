import json
import os

import pytest

from subner.cli import main

SYNTH_CONFIG = """
classes = NEL, NEP
suffixes = NEL:pur|gad; NEP:rao|bai
stems_per_class = 20
n_fillers = 30
n_train = 60
n_test = 30
n_validation = 15
len_min = 3
len_max = 6
stem_len_min = 2
stem_len_max = 2
oov_rate = 1.0
seed = 7
"""

TRAIN_CONFIG = """
epochs = 6
batch_size = 8
max_len = 24
learning_rate = 0.005
seed = 3
embed_dim = 24
conv_filters = 32
lstm_hidden = 16
"""


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    cfg = root / "synth.cfg"
    cfg.write_text(SYNTH_CONFIG, encoding="utf-8")
    data = root / "data"
    assert main(["synth", "--config", str(cfg), "--out", str(data)]) == 0
    return data


def test_synth_outputs(synth_dir):
    for name in ("train.conll", "test.conll", "validation.conll", "vocab.txt"):
        assert (synth_dir / name).exists()


def test_stats_runs(synth_dir, capsys):
    assert main(["stats", "--input", str(synth_dir / "train.conll")]) == 0
    out = capsys.readouterr().out
    assert "sentences\t60" in out


def test_tokenize_subword(synth_dir, capsys):
    assert main([
        "tokenize", "--input", str(synth_dir / "train.conll"),
        "--vocab", str(synth_dir / "vocab.txt"), "--limit", "2",
    ]) == 0
    out = capsys.readouterr().out
    assert "fertility" in out


def test_tokenize_word_mode_fertility_one(synth_dir, capsys):
    assert main([
        "tokenize", "--input", str(synth_dir / "train.conll"),
        "--mode", "word", "--limit", "1",
    ]) == 0
    assert "fertility 1.0000" in capsys.readouterr().out


def test_tokenize_missing_vocab_exit_2(synth_dir, capsys):
    code = main([
        "tokenize", "--input", str(synth_dir / "train.conll"),
        "--vocab", str(synth_dir / "does-not-exist.txt"),
    ])
    assert code == 2
    assert "does-not-exist.txt" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    cfg = out / "train.cfg"
    cfg.write_text(TRAIN_CONFIG, encoding="utf-8")
    code = main([
        "train", "--train", str(synth_dir / "train.conll"),
        "--val", str(synth_dir / "validation.conll"),
        "--arch", "CNN", "--tokenizer", "wordpiece",
        "--vocab", str(synth_dir / "vocab.txt"),
        "--config", str(cfg), "--out", str(out), "--run-name", "cnn",
    ])
    assert code == 0
    return out, cfg


def test_train_artifacts(trained):
    out, _ = trained
    assert (out / "cnn.ckpt").exists()
    assert (out / "cnn.history.txt").exists()
    record = json.loads((out / "cnn.run.json").read_text())
    assert record["arch"] == "CNN"
    assert record["param_count"] > 0


def test_train_rerun_byte_identical(trained, synth_dir, tmp_path):
    out, cfg = trained
    out2 = tmp_path / "rerun"
    code = main([
        "train", "--train", str(synth_dir / "train.conll"),
        "--val", str(synth_dir / "validation.conll"),
        "--arch", "CNN", "--tokenizer", "wordpiece",
        "--vocab", str(synth_dir / "vocab.txt"),
        "--config", str(cfg), "--out", str(out2), "--run-name", "cnn",
    ])
    assert code == 0
    assert (out / "cnn.history.txt").read_bytes() == \
        (out2 / "cnn.history.txt").read_bytes()
    assert (out / "cnn.ckpt").read_bytes() == (out2 / "cnn.ckpt").read_bytes()


def test_eval_writes_tsv(trained, synth_dir, tmp_path, capsys):
    out, _ = trained
    tsv = tmp_path / "report.tsv"
    code = main([
        "eval", "--checkpoint", str(out / "cnn.ckpt"),
        "--test", str(synth_dir / "test.conll"),
        "--strategy", "majority", "--out", str(tsv),
    ])
    assert code == 0
    text = capsys.readouterr().out
    assert "clubbing: majority" in text
    lines = tsv.read_text().splitlines()
    assert lines[0] == "class\tprecision\trecall\tf1\tsupport"
    assert lines[-1].startswith("accuracy")


def test_eval_corrupt_checkpoint_exit_4(trained, synth_dir, tmp_path, capsys):
    out, _ = trained
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes((out / "cnn.ckpt").read_bytes()[:-11])
    code = main([
        "eval", "--checkpoint", str(bad),
        "--test", str(synth_dir / "test.conll"),
    ])
    assert code == 4
    assert "checksum" in capsys.readouterr().err


def test_predict(trained, tmp_path, capsys):
    out, _ = trained
    text = tmp_path / "input.txt"
    text.write_text("dupur ozbai\n", encoding="utf-8")
    code = main([
        "predict", "--checkpoint", str(out / "cnn.ckpt"),
        "--input", str(text), "--strategy", "majority",
    ])
    assert code == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    assert len(lines) == 2
    assert all("\t" in l for l in lines)


def test_compare_grid(synth_dir, tmp_path, capsys):
    grid = tmp_path / "grid.cfg"
    grid.write_text(
        "tokenizer.word-based = word\n"
        f"tokenizer.synthpiece = wordpiece:{synth_dir / 'vocab.txt'}\n"
        "archs = CNN\n"
        f"train = {synth_dir / 'train.conll'}\n"
        f"validation = {synth_dir / 'validation.conll'}\n"
        f"test = {synth_dir / 'test.conll'}\n"
        "strategy = majority\n"
        + TRAIN_CONFIG,
        encoding="utf-8",
    )
    out = tmp_path / "gridout"
    assert main(["compare", "--grid", str(grid), "--out", str(out)]) == 0
    assert (out / "report.md").exists()
    tsv = (out / "report.tsv").read_text().splitlines()
    assert tsv[0].startswith("tokenizer\tCNN.macro_f1")
    rows = {line.split("\t")[0]: line.split("\t")[1:] for line in tsv[1:]}
    word_f1 = float(rows["word-based"][0])
    sub_f1 = float(rows["synthpiece"][0])
    assert sub_f1 > word_f1  # OOV-heavy test split favors subwords

    # matrix cell equals the standalone train+eval path for the same seed
    record = json.loads((out / "synthpiece.CNN.run.json").read_text())
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN_CONFIG + "strategy = majority\n", encoding="utf-8")
    solo = tmp_path / "solo"
    assert main([
        "train", "--train", str(synth_dir / "train.conll"),
        "--val", str(synth_dir / "validation.conll"),
        "--arch", "CNN", "--tokenizer", "wordpiece",
        "--vocab", str(synth_dir / "vocab.txt"),
        "--config", str(cfg), "--out", str(solo), "--run-name", "solo",
    ]) == 0
    assert (solo / "solo.ckpt").read_bytes() == \
        (out / "synthpiece.CNN.ckpt").read_bytes()
    assert abs(record["metrics"]["macro_f1"] - sub_f1) < 5e-7


def test_compare_single_cell(synth_dir, tmp_path):
    grid = tmp_path / "grid.cfg"
    grid.write_text(
        "tokenizer.word-based = word\n"
        "archs = CNN\n"
        f"train = {synth_dir / 'train.conll'}\n"
        f"test = {synth_dir / 'test.conll'}\n"
        "epochs = 2\nbatch_size = 8\nmax_len = 16\n"
        "embed_dim = 8\nconv_filters = 8\n",
        encoding="utf-8",
    )
    out = tmp_path / "gridout"
    assert main(["compare", "--grid", str(grid), "--out", str(out)]) == 0
    tsv = (out / "report.tsv").read_text().splitlines()
    assert len(tsv) == 2


def test_external_segmentation_training(synth_dir, tmp_path):
    # build external segmentations equivalent to word-mode ids
    from subner.corpus import parse_conll
    from subner.tokenizers import build_word_vocab, segment_sentence

    train_corpus = parse_conll((synth_dir / "train.conll").read_text(), "train")
    test_corpus = parse_conll((synth_dir / "test.conll").read_text(), "test")
    vocab = build_word_vocab(train_corpus, 1)
    for corpus, name in ((train_corpus, "train"), (test_corpus, "test")):
        with open(tmp_path / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for sent in corpus:
                enc = segment_sentence(sent.words, vocab, "word")
                fh.write(json.dumps({
                    "subtokens": list(enc.subtokens),
                    "ids": list(enc.ids),
                    "word_ids": list(enc.word_ids),
                }) + "\n")
    out = tmp_path / "ext"
    code = main([
        "train", "--train", str(synth_dir / "train.conll"),
        "--arch", "CNN", "--tokenizer", "external",
        "--seg-train", str(tmp_path / "train.jsonl"),
        "--seed", "1", "--out", str(out), "--run-name", "ext",
    ])
    assert code == 0
    code = main([
        "eval", "--checkpoint", str(out / "ext.ckpt"),
        "--test", str(synth_dir / "test.conll"),
        "--seg", str(tmp_path / "test.jsonl"),
    ])
    assert code == 0


def test_malformed_corpus_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.conll"
    bad.write_text("a b O\n", encoding="utf-8")
    assert main(["stats", "--input", str(bad)]) == 2
