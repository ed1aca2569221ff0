"""Command-line surface: tokenize, train, predict, eval, compare, synth, stats.

Exit codes: 0 ok, 2 input/file errors, 3 training errors, 4 evaluation errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import taggers as taggers_mod
from . import tokenizers as tok_mod
from .alignment import ClubbingStrategy
from .errors import (
    DuplicateToken,
    EmptyCorpus,
    InvalidConfig,
    MalformedLine,
    MissingSpecial,
    SubnerError,
)
from .util import atomic_write_text, parse_kv_file

EXIT_INPUT = 2
EXIT_TRAIN = 3
EXIT_EVAL = 4


def _read_corpus(path, split_name="unsplit"):
    with open(path, "r", encoding="utf-8") as fh:
        return corpus_mod.parse_conll(fh.read(), split_name)


def _train_config_from_kv(kv, seed_override=None):
    kwargs = {}
    for key in ("epochs", "batch_size", "max_len", "seed", "patience"):
        if key in kv:
            kwargs[key] = int(kv[key])
    for key in ("learning_rate", "rho", "epsilon", "grad_clip"):
        if key in kv:
            kwargs[key] = float(kv[key])
    if "strategy" in kv:
        kwargs["strategy"] = ClubbingStrategy.parse(kv["strategy"])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return taggers_mod.TrainConfig(**kwargs)


def _hyper_from_kv(kv, num_labels):
    kwargs = {"num_labels": num_labels}
    for key in ("embed_dim", "conv_filters", "conv_kernel", "lstm_hidden",
                "bilstm_hidden"):
        if key in kv:
            kwargs[key] = int(kv[key])
    return taggers_mod.Hyperparams(**kwargs)


def _build_segmenters(spec, train_corpus, args_vocab=None):
    """Resolve a tokenizer spec into per-split segmenters.

    Specs: `word`, `wordpiece:<vocab path>`,
    `external:<train seg>,<val seg or ->,<test seg or ->`.
    Returns (train_seg, val_seg, test_seg, description).
    """
    if spec == "word":
        vocab = tok_mod.build_word_vocab(train_corpus, min_freq=1)
        seg = tok_mod.VocabSegmenter(vocab, "word")
        return seg, seg, seg, "word"
    if spec.startswith("wordpiece:"):
        vocab = tok_mod.load_vocab(spec.split(":", 1)[1])
        seg = tok_mod.VocabSegmenter(vocab, "subword")
        return seg, seg, seg, spec
    if spec == "wordpiece":
        if not args_vocab:
            raise SubnerError("wordpiece tokenizer needs --vocab")
        vocab = tok_mod.load_vocab(args_vocab)
        seg = tok_mod.VocabSegmenter(vocab, "subword")
        return seg, seg, seg, f"wordpiece:{args_vocab}"
    if spec.startswith("external:"):
        paths = spec.split(":", 1)[1].split(",")
        segs = []
        pad_id = None
        vocab_size = 0
        encodings_per_split = []
        for p in paths:
            p = p.strip()
            if not p or p == "-":
                encodings_per_split.append(None)
                continue
            encs = tok_mod.load_external_segmentation(p)
            encodings_per_split.append(encs)
            for e in encs:
                if e.ids:
                    vocab_size = max(vocab_size, max(e.ids) + 1)
        pad_id = vocab_size  # one extra id reserved for padding
        for encs in encodings_per_split:
            if encs is None:
                segs.append(None)
            else:
                segs.append(tok_mod.PrecomputedSegmenter(encs, pad_id=pad_id))
        while len(segs) < 3:
            segs.append(None)
        return segs[0], segs[1], segs[2], spec
    raise SubnerError(f"unknown tokenizer spec {spec!r}")


# ---------------------------------------------------------------------------
# Commands


def cmd_stats(args):
    corpus = _read_corpus(args.input)
    stats = corpus_mod.corpus_stats(corpus)
    print(f"sentences\t{stats.sentence_count}")
    print(f"tokens\t{stats.token_count}")
    print(f"tags (non-O)\t{stats.tag_count}")
    for label in sorted(stats.per_label_counts):
        print(f"label {label}\t{stats.per_label_counts[label]}")
    return 0


def cmd_synth(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg, seed = corpus_mod.parse_synth_config(fh.read())
    if args.seed is not None:
        seed = args.seed
    if seed is None:
        seed = 0
    os.makedirs(args.out, exist_ok=True)
    splits = corpus_mod.generate_synthetic(cfg, seed)
    for name, split in splits.items():
        path = os.path.join(args.out, f"{name}.conll")
        atomic_write_text(path, corpus_mod.write_conll(split))
        stats = corpus_mod.corpus_stats(split)
        print(f"{name}: {stats.sentence_count} sentences, "
              f"{stats.token_count} tokens, {stats.tag_count} tags -> {path}")
    vocab_path = os.path.join(args.out, "vocab.txt")
    tokens = corpus_mod.synthetic_vocab_tokens(cfg, seed)
    atomic_write_text(vocab_path, "\n".join(tokens) + "\n")
    print(f"wordpiece vocab: {len(tokens)} tokens -> {vocab_path}")
    return 0


def cmd_tokenize(args):
    corpus = _read_corpus(args.input)
    if args.mode == "word" and args.vocab is None:
        vocab = tok_mod.build_word_vocab(corpus, min_freq=1)
    else:
        if args.vocab is None:
            raise SubnerError("subword mode needs --vocab")
        vocab = tok_mod.load_vocab(args.vocab)
    shown = 0
    for sent in corpus:
        if args.limit is not None and shown >= args.limit:
            break
        enc = tok_mod.segment_sentence(sent.words, vocab, args.mode)
        print(" ".join(enc.subtokens))
        shown += 1
    stats = tok_mod.fertility_stats(corpus, vocab, args.mode)
    print(f"# words {stats.words_total}  subtokens {stats.subtokens_total}  "
          f"fertility {stats.fertility:.4f}  unk_word_rate {stats.unk_word_rate:.4f}")
    return 0


def _run_training(train_path, val_path, tokenizer_spec, arch, kv, seed,
                  out_dir, run_name, vocab_flag=None):
    """Shared by cmd_train and cmd_compare; returns the RunRecord dict."""
    train_corpus = _read_corpus(train_path, "train")
    val_corpus = _read_corpus(val_path, "validation") if val_path else None
    seg_train, seg_val, _, tok_desc = _build_segmenters(
        tokenizer_spec, train_corpus, vocab_flag
    )
    if seg_train is None:
        raise SubnerError("tokenizer spec provides no training segmentation")
    if val_corpus is not None and seg_val is None:
        raise SubnerError("tokenizer spec provides no validation segmentation")

    labels = corpus_mod.build_label_set(train_corpus)
    config = _train_config_from_kv(kv, seed)
    hyper = _hyper_from_kv(kv, len(labels))
    if val_corpus is None:
        print("warning: no validation split; early stopping disabled",
              file=sys.stderr)

    vocab = getattr(seg_train, "vocab", None)
    try:
        if vocab is not None:
            model = taggers_mod.build_model(arch, hyper, vocab, labels,
                                            config.seed,
                                            tokenizer_mode=seg_train.mode)
        else:
            model = taggers_mod.build_model(
                arch, hyper, None, labels, config.seed,
                tokenizer_mode="external",
                vocab_size=seg_train.vocab_size, pad_id=seg_train.pad_id,
            )
        t0 = time.perf_counter()
        model, history = taggers_mod.train(model, train_corpus, val_corpus,
                                           seg_train, config,
                                           val_segmenter=seg_val)
        wall = time.perf_counter() - t0
    except SubnerError as exc:
        raise TrainingFailure(str(exc)) from exc

    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, f"{run_name}.ckpt")
    taggers_mod.save_checkpoint(model, ckpt_path)
    atomic_write_text(os.path.join(out_dir, f"{run_name}.history.txt"),
                      history.to_file_text())
    record = {
        "run": run_name,
        "arch": arch,
        "tokenizer": tok_desc,
        "seed": config.seed,
        "config": {
            "epochs": config.epochs, "batch_size": config.batch_size,
            "max_len": config.max_len, "learning_rate": config.learning_rate,
            "patience": config.patience, "strategy": config.strategy.value,
        },
        "hyper": {
            "embed_dim": hyper.embed_dim, "conv_filters": hyper.conv_filters,
            "conv_kernel": hyper.conv_kernel, "lstm_hidden": hyper.lstm_hidden,
            "bilstm_hidden": hyper.bilstm_hidden, "num_labels": hyper.num_labels,
        },
        "param_count": taggers_mod.count_params(model),
        "epochs_run": len(history.train_loss),
        "best_epoch": history.best_epoch,
        "truncated_rows": history.truncated_rows,
        "train_seconds": wall,
        "checkpoint": ckpt_path,
    }
    atomic_write_text(os.path.join(out_dir, f"{run_name}.run.json"),
                      json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


class TrainingFailure(SubnerError):
    pass


def cmd_train(args):
    kv = parse_kv_file(args.config) if args.config else {}
    spec = args.tokenizer
    if spec == "wordpiece" and args.vocab:
        spec = f"wordpiece:{args.vocab}"
    if spec == "external":
        seg_paths = [args.seg_train or "-", args.seg_val or "-", "-"]
        spec = "external:" + ",".join(seg_paths)
    record = _run_training(args.train, args.val, spec, args.arch, kv,
                           args.seed, args.out, args.run_name)
    print(f"trained {record['run']}: {record['param_count']} parameters, "
          f"{record['epochs_run']} epochs, checkpoint {record['checkpoint']}")
    return 0


def cmd_predict(args):
    model = taggers_mod.load_checkpoint(args.checkpoint)
    if model.vocab is None:
        raise SubnerError("externally segmented checkpoints cannot predict raw text")
    segmenter = tok_mod.VocabSegmenter(model.vocab, model.tokenizer_mode)
    strategy = ClubbingStrategy.parse(args.strategy)
    with open(args.input, "r", encoding="utf-8") as fh:
        for line in fh:
            words = line.split()
            if not words:
                print()
                continue
            for word, tag in taggers_mod.predict_sentence(model, words,
                                                          segmenter, strategy):
                print(f"{word}\t{tag}")
            print()
    return 0


def cmd_eval(args):
    model = taggers_mod.load_checkpoint(args.checkpoint)
    test_corpus = _read_corpus(args.test, "test")
    taggers_mod.check_label_compat(model, test_corpus)
    if args.seg:
        segmenter = tok_mod.PrecomputedSegmenter(
            tok_mod.load_external_segmentation(args.seg), pad_id=model.pad_id
        )
    elif model.vocab is not None:
        segmenter = tok_mod.VocabSegmenter(model.vocab, model.tokenizer_mode)
    else:
        raise SubnerError("externally segmented checkpoint needs --seg")
    strategy = ClubbingStrategy.parse(args.strategy)
    report = metrics_mod.evaluate(model, test_corpus, segmenter, strategy,
                                  span_scheme=args.span_scheme)
    sys.stdout.write(metrics_mod.report_to_text(report))
    if args.out:
        atomic_write_text(args.out, metrics_mod.report_to_tsv(report))
        print(f"tsv report -> {args.out}")
    return 0


def cmd_compare(args):
    kv = parse_kv_file(args.grid)
    base = os.path.dirname(os.path.abspath(args.grid))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    tokenizers = []
    for key in kv:
        if key.startswith("tokenizer."):
            name = key.split(".", 1)[1]
            spec = kv[key]
            if spec.startswith("wordpiece:"):
                spec = "wordpiece:" + resolve(spec.split(":", 1)[1])
            elif spec.startswith("external:"):
                paths = [p if p.strip() in ("", "-") else resolve(p.strip())
                         for p in spec.split(":", 1)[1].split(",")]
                spec = "external:" + ",".join(paths)
            tokenizers.append((name, spec))
    archs = [a.strip() for a in kv.get("archs", "CNN").split(",") if a.strip()]
    if not tokenizers or not archs:
        raise SubnerError("grid needs at least one tokenizer.<name> and one arch")
    if "train" not in kv or "test" not in kv:
        raise SubnerError("grid needs train= and test= corpus paths")
    train_path = resolve(kv["train"])
    test_path = resolve(kv["test"])
    val_path = resolve(kv["validation"]) if "validation" in kv else None
    seed = int(kv.get("seed", "0"))
    strategy = ClubbingStrategy.parse(kv.get("strategy", "first"))
    os.makedirs(args.out, exist_ok=True)

    results = {}   # (tok_name, arch) -> EvalReport or None
    records = []
    any_ok = False
    for tok_name, spec in tokenizers:
        for arch in archs:
            run_name = f"{tok_name}.{arch}"
            try:
                record = _run_training(train_path, val_path, spec, arch, kv,
                                       seed, args.out, run_name)
                model = taggers_mod.load_checkpoint(record["checkpoint"])
                test_corpus = _read_corpus(test_path, "test")
                taggers_mod.check_label_compat(model, test_corpus)
                train_corpus = _read_corpus(train_path, "train")
                _, _, seg_test, _ = _build_segmenters(spec, train_corpus)
                if seg_test is None:
                    raise SubnerError("tokenizer spec provides no test segmentation")
                report = metrics_mod.evaluate(model, test_corpus, seg_test,
                                              strategy)
                results[(tok_name, arch)] = report
                record["metrics"] = {
                    "macro_f1": report.macro_f1,
                    "macro_precision": report.macro_precision,
                    "macro_recall": report.macro_recall,
                    "micro_f1": report.micro_f1,
                    "accuracy": report.accuracy,
                }
                record["status"] = "ok"
                any_ok = True
            except SubnerError as exc:
                print(f"run {run_name} failed: {exc}", file=sys.stderr)
                results[(tok_name, arch)] = None
                record = {"run": run_name, "status": "failed", "error": str(exc)}
            records.append(record)
            atomic_write_text(os.path.join(args.out, f"{run_name}.run.json"),
                              json.dumps(record, indent=2, sort_keys=True) + "\n")

    md = _render_markdown(tokenizers, archs, results, strategy)
    tsv = _render_tsv(tokenizers, archs, results)
    atomic_write_text(os.path.join(args.out, "report.md"), md)
    atomic_write_text(os.path.join(args.out, "report.tsv"), tsv)
    sys.stdout.write(md)
    return 0 if any_ok else EXIT_TRAIN


def _render_markdown(tokenizers, archs, results, strategy):
    metric_groups = [
        ("F1", "macro_f1"), ("Precision", "macro_precision"),
        ("Recall", "macro_recall"), ("Accuracy", "accuracy"),
    ]
    best_f1 = {}
    for arch in archs:
        cells = [(name, results[(name, arch)]) for name, _ in tokenizers
                 if results[(name, arch)] is not None]
        if cells:
            best_f1[arch] = max(cells, key=lambda kv: kv[1].macro_f1)[0]
    header = ["Tokenizer/Model"]
    for title, _ in metric_groups:
        header.extend(f"{title} {arch}" for arch in archs)
    lines = [
        f"# Tokenizer x architecture comparison",
        "",
        f"Headline metric: macro over non-O classes; clubbing: {strategy.value}.",
        "",
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for name, _ in tokenizers:
        row = [name]
        for title, attr in metric_groups:
            for arch in archs:
                report = results[(name, arch)]
                if report is None:
                    row.append("failed")
                    continue
                value = f"{getattr(report, attr) * 100:.1f}"
                if attr == "macro_f1" and best_f1.get(arch) == name:
                    value = f"**{value}**"
                row.append(value)
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _render_tsv(tokenizers, archs, results):
    cols = ["tokenizer"]
    for arch in archs:
        cols.extend(f"{arch}.{m}" for m in
                    ("macro_f1", "macro_precision", "macro_recall", "accuracy"))
    lines = ["\t".join(cols)]
    for name, _ in tokenizers:
        row = [name]
        for arch in archs:
            report = results[(name, arch)]
            if report is None:
                row.extend(["failed"] * 4)
            else:
                row.extend(f"{v:.6f}" for v in (
                    report.macro_f1, report.macro_precision,
                    report.macro_recall, report.accuracy,
                ))
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subner",
        description="Subword-tokenized shallow NER taggers and tokenizer "
                    "comparison harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics for a CoNLL file")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_stats, error_code=EXIT_INPUT)

    p = sub.add_parser("synth", help="generate a synthetic inflected corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth, error_code=EXIT_INPUT)

    p = sub.add_parser("tokenize", help="show segmentations and fertility stats")
    p.add_argument("--input", required=True)
    p.add_argument("--vocab")
    p.add_argument("--mode", choices=("subword", "word"), default="subword")
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_tokenize, error_code=EXIT_INPUT)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--arch", choices=taggers_mod.ARCHS, required=True)
    p.add_argument("--tokenizer", default="word",
                   help="word | wordpiece (with --vocab) | external")
    p.add_argument("--vocab")
    p.add_argument("--seg-train", dest="seg_train")
    p.add_argument("--seg-val", dest="seg_val")
    p.add_argument("--config", help="flat key=value training config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--run-name", dest="run_name", default="run")
    p.set_defaults(func=cmd_train, error_code=EXIT_TRAIN)

    p = sub.add_parser("predict", help="tag raw text (one sentence per line)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--strategy", default="first")
    p.set_defaults(func=cmd_predict, error_code=EXIT_EVAL)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a CoNLL file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--strategy", default="first")
    p.add_argument("--seg", help="external segmentation for the test file")
    p.add_argument("--span-scheme", dest="span_scheme",
                   choices=("bio", "flat"), default=None)
    p.add_argument("--out", help="TSV report path")
    p.set_defaults(func=cmd_eval, error_code=EXIT_EVAL)

    p = sub.add_parser("compare", help="tokenizer x architecture grid run")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare, error_code=EXIT_TRAIN)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingFailure as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (MalformedLine, EmptyCorpus, DuplicateToken, MissingSpecial,
            InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SubnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return args.error_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
