"""``ctxaug`` command line.

Every flag can also come from ``--config FILE``: experiment commands (run,
train, gridsearch) read the key tree documented in :mod:`ctxaug.harness.config`;
the other commands read ``commands.<name>`` from the same file, whose keys are
the flag names with dashes turned into underscores. Flags override the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .. import __version__, bilm, synthetic
from ..augment import AugmentPolicy, augment_examples, load_synonym_lexicon
from ..bilm import BiLM, BiLMDims, LMTrainConfig
from ..checkpoint import CheckpointError
from ..classify import Classifier, evaluate, train_classifier
from ..corpus import (
    ParseError,
    Vocabulary,
    build_vocab,
    load_labeled_tsv,
    load_plain_corpus,
    write_labeled_tsv,
)
from ..numcore import kernels
from .config import ConfigError, load_config, load_tree
from .experiment import (
    dump_predictions,
    emit_table,
    grid_search,
    load_data,
    read_records,
    run_experiment,
    seed_lm,
    seed_splits,
)

log = logging.getLogger("ctxaug")

# experiment flag dest -> dotted config key
EXPERIMENT_KEYS = {
    "train": "data.train", "dev": "data.dev", "test": "data.test", "vocab": "data.vocab",
    "lexicon": "data.lexicon", "lm": "data.lm", "dataset_name": "data.name",
    "arch": "model.arch", "augmentation": "augment.method", "tau": "augment.tau",
    "replace_prob": "augment.replace_prob", "seeds": "seeds", "max_train": "max_train",
    "valid_fraction": "valid_fraction", "max_epochs": "train.max_epochs", "batch_size": "train.batch_size",
    "lr": "train.lr", "patience": "train.patience",
}

# simple-command defaults; None means required
SIMPLE_DEFAULTS = {
    "make-synthetic": {"out": None, "seed": 0, "n_pretrain": 2000, "n_train": 600, "n_dev": 200, "n_test": 600},
    "pretrain": {
        "corpus": None, "out": None, "vocab": None, "vocab_out": None, "min_count": 1, "max_vocab": 50000,
        "embed_dim": 32, "hidden_dim": 64, "combiner_dim": 64, "epochs": 10, "batch_size": 32, "lr": 0.005,
        "dropout": 0.1, "max_len": 64, "seed": 0, "dtype": "float32",
    },
    "retrofit": {"lm": None, "vocab": None, "out": None, "labels": None, "labels_from": None, "label_dim": 8, "seed": 0},
    "finetune-lm": {
        "lm": None, "vocab": None, "data": None, "out": None, "epochs": 4, "batch_size": 32, "lr": 0.01,
        "dropout": 0.1, "max_len": 64, "seed": 0, "freeze_pretrained": False,
    },
    "augment": {
        "input": None, "output": None, "vocab": None, "method": "context+label", "lm": None, "lexicon": None,
        "tau": "1.0", "replace_prob": 0.1, "seed": 0,
    },
    "eval": {"model": None, "vocab": None, "data": None, "labels_from": None},
    "dump-topk": {"lm": None, "vocab": None, "sentence": None, "labels": None, "k": 10},
    "report": {"inputs": None},
}


def _csv(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _add_experiment_flags(p):
    p.add_argument("--config", help="YAML experiment config")
    g = p.add_argument_group("data")
    for name in ("train", "dev", "test", "vocab", "lexicon", "lm"):
        g.add_argument(f"--{name}")
    g.add_argument("--dataset-name")
    m = p.add_argument_group("model and training")
    m.add_argument("--arch", choices=("cnn", "rnn"))
    m.add_argument("--augmentation", choices=("none", "synonym", "context", "context+label"))
    m.add_argument("--tau", type=_csv, help="comma-separated temperatures; 'uniform' and 'argmax' allowed")
    m.add_argument("--replace-prob", type=lambda s: [float(x) for x in _csv(s)], help="comma-separated")
    m.add_argument("--seeds", type=lambda s: [int(x) for x in _csv(s)], help="comma-separated seeds")
    m.add_argument("--max-train", type=int)
    m.add_argument("--valid-fraction", type=float)
    m.add_argument("--max-epochs", type=int)
    m.add_argument("--batch-size", type=int)
    m.add_argument("--lr", type=float)
    m.add_argument("--patience", type=int)
    p.add_argument("--report", help="append JSON-lines records to this file")


def build_parser():
    parser = argparse.ArgumentParser(prog="ctxaug", description="Contextual text augmentation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--kernels", choices=("auto", "python", "cython"), help="numeric kernel backend")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="write the synthetic polarity task")
    p.add_argument("--out")
    for k in ("seed", "n_pretrain", "n_train", "n_dev", "n_test"):
        p.add_argument("--" + k.replace("_", "-"), type=int)

    p = sub.add_parser("pretrain", help="train an unconditional cloze LM on plain text")
    p.add_argument("--corpus", help="one sentence per line")
    p.add_argument("--out", help="checkpoint to write")
    p.add_argument("--vocab", help="existing vocabulary file")
    p.add_argument("--vocab-out", help="build a vocabulary from --corpus and write it here")
    for k in ("min_count", "max_vocab", "embed_dim", "hidden_dim", "combiner_dim", "epochs", "batch_size", "max_len", "seed"):
        p.add_argument("--" + k.replace("_", "-"), type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--dtype", choices=("float32", "float64"))

    p = sub.add_parser("retrofit", help="add a label pathway to an unconditional LM")
    for k in ("lm", "vocab", "out"):
        p.add_argument("--" + k)
    p.add_argument("--labels", type=_csv, help="comma-separated label names")
    p.add_argument("--labels-from", help="take label names (first-appearance order) from this TSV")
    p.add_argument("--label-dim", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("finetune-lm", help="fine-tune an LM; conditional checkpoints use the TSV labels")
    for k in ("lm", "vocab", "out"):
        p.add_argument("--" + k)
    p.add_argument("--data", help="labeled TSV")
    for k in ("epochs", "batch_size", "max_len", "seed"):
        p.add_argument("--" + k.replace("_", "-"), type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--freeze-pretrained", action="store_const", const=True)

    p = sub.add_parser("augment", help="write an augmented copy of a labeled TSV")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--vocab")
    p.add_argument("--method", choices=("synonym", "context", "context+label"))
    p.add_argument("--lm")
    p.add_argument("--lexicon")
    p.add_argument("--tau")
    p.add_argument("--replace-prob", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("eval", help="accuracy of a classifier checkpoint on a labeled TSV")
    for k in ("model", "vocab", "data"):
        p.add_argument("--" + k)
    p.add_argument("--labels-from", help="TSV fixing label ids (default: names stored in the checkpoint)")

    p = sub.add_parser("dump-topk", help="top-k cloze predictions per position and label")
    for k in ("lm", "vocab", "sentence"):
        p.add_argument("--" + k)
    p.add_argument("--labels", type=_csv)
    p.add_argument("--k", type=int)

    p = sub.add_parser("report", help="tabulate JSON-lines records")
    p.add_argument("inputs", nargs="*")

    for name, help_text in (
        ("run", "multi-seed experiment with one augmentation setting"),
        ("train", "train a single classifier and save it"),
        ("gridsearch", "grid search over tau and replace_prob on validation accuracy"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_experiment_flags(p)
        if name == "train":
            p.add_argument("--out", help="classifier checkpoint to write")
    for p in sub.choices.values():
        if not any(a.dest == "config" for a in p._actions):
            p.add_argument("--config")
    return parser


# file-valued keys of the simple commands; relative values in a config file resolve against its directory
_FILE_KEYS = {"corpus", "out", "vocab", "vocab_out", "lm", "lexicon", "data", "input", "output", "model",
              "labels_from", "inputs"}


def resolve_simple(args):
    """Fill unset flags from the config section and then the built-in defaults."""
    section = {}
    if args.config:
        commands = load_tree(args.config).get("commands") or {}
        section = commands.get(args.command) or {} if isinstance(commands, dict) else None
        if not isinstance(section, dict):
            raise ConfigError(f"config section commands.{args.command} must be a mapping")
        base = Path(args.config).resolve().parent
        for key in _FILE_KEYS & set(section):
            val = section[key]
            if isinstance(val, list):
                section[key] = [str(base / v) for v in val]
            elif val:
                section[key] = str(base / val)
    defaults = SIMPLE_DEFAULTS[args.command]
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in config section commands.{args.command}: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        val = getattr(args, key, None)
        if val is None or val == []:
            val = section.get(key, default)
        out[key] = val
    return argparse.Namespace(**out)


def _require(opts, *keys):
    missing = [k for k in keys if getattr(opts, k) in (None, [], "")]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def experiment_config(args):
    overrides = {dotted: getattr(args, dest, None) for dest, dotted in EXPERIMENT_KEYS.items()}
    return load_config(args.config, overrides)


def cmd_make_synthetic(o):
    _require(o, "out")
    paths = synthetic.write_polarity_task(o.out, o.seed, o.n_pretrain, o.n_train, o.n_dev, o.n_test)
    for name, path in paths.items():
        print(f"{name}\t{path}")


def _load_vocab(path):
    return Vocabulary.load(path)


def cmd_pretrain(o):
    _require(o, "corpus", "out")
    if o.vocab:
        vocab = _load_vocab(o.vocab)
    elif o.vocab_out:
        vocab = build_vocab(load_plain_corpus(o.corpus), o.min_count, o.max_vocab)
        vocab.save(o.vocab_out)
    else:
        raise ConfigError("pretrain needs --vocab or --vocab-out")
    sentences = load_plain_corpus(o.corpus, vocab)
    dims = BiLMDims(vocab.size, o.embed_dim, o.hidden_dim, o.combiner_dim)
    cfg = LMTrainConfig(o.epochs, o.batch_size, o.lr, o.dropout, o.max_len, o.seed)
    model = bilm.pretrain(sentences, cfg, dims, vocab.digest(), np.dtype(o.dtype).type)
    model.save(o.out)
    print(json.dumps({"out": o.out, "vocab_size": vocab.size, "loss_history": model.history}))


def _label_names(o):
    if o.labels:
        return tuple(o.labels)
    if o.labels_from:
        _, meta = load_labeled_tsv(o.labels_from)
        return meta.label_names
    raise ConfigError("retrofit needs --labels or --labels-from")


def cmd_retrofit(o):
    _require(o, "lm", "vocab", "out")
    vocab = _load_vocab(o.vocab)
    names = _label_names(o)
    model = bilm.retrofit_conditional(BiLM.load(o.lm, vocab), len(names), o.label_dim, o.seed, names)
    model.save(o.out)
    print(json.dumps({"out": o.out, "labels": list(names)}))


def cmd_finetune_lm(o):
    _require(o, "lm", "vocab", "data", "out")
    vocab = _load_vocab(o.vocab)
    model = BiLM.load(o.lm, vocab)
    cfg = LMTrainConfig(o.epochs, o.batch_size, o.lr, o.dropout, o.max_len, o.seed, bool(o.freeze_pretrained))
    if model.conditional:
        examples, _ = load_labeled_tsv(o.data, vocab, model.label_names or None)
        model = bilm.finetune_conditional(model, examples, cfg)
    else:
        try:
            examples, _ = load_labeled_tsv(o.data, vocab)
            sentences = [ex.tokens for ex in examples]
        except ParseError:
            sentences = load_plain_corpus(o.data, vocab)
        model = bilm.finetune_unconditional(model, sentences, cfg)
    model.save(o.out)
    print(json.dumps({"out": o.out, "conditional": model.conditional, "loss_history": model.history}))


def cmd_augment(o):
    _require(o, "input", "output", "vocab", "method")
    vocab = _load_vocab(o.vocab)
    rng = np.random.default_rng(o.seed)
    policy = AugmentPolicy(o.tau, o.replace_prob)
    lm = lexicon = None
    label_names = None
    if o.method == "synonym":
        _require(o, "lexicon")
        lexicon = load_synonym_lexicon(o.lexicon, vocab)
    else:
        _require(o, "lm")
        lm = BiLM.load(o.lm, vocab)
        if o.method == "context+label":
            label_names = lm.label_names or None
    examples, meta = load_labeled_tsv(o.input, vocab, label_names)
    out = augment_examples(examples, o.method, rng, lm=lm, lexicon=lexicon, policy=policy)
    write_labeled_tsv(o.output, out, vocab, meta)
    print(json.dumps({"output": o.output, "examples": len(out)}))


def cmd_eval(o):
    _require(o, "model", "vocab", "data")
    vocab = _load_vocab(o.vocab)
    model = Classifier.load(o.model, vocab)
    names = model.label_names or None
    if o.labels_from:
        names = load_labeled_tsv(o.labels_from)[1].label_names
    data, _ = load_labeled_tsv(o.data, vocab, names)
    print(json.dumps({"accuracy": evaluate(model, data), "examples": len(data)}))


def cmd_dump_topk(o):
    _require(o, "lm", "vocab", "sentence", "labels")
    vocab = _load_vocab(o.vocab)
    _, text = dump_predictions(o.sentence, BiLM.load(o.lm, vocab), vocab, o.labels, o.k)
    sys.stdout.write(text)


def cmd_report(o):
    _require(o, "inputs")
    inputs = o.inputs if isinstance(o.inputs, list) else [o.inputs]
    records = []
    for path in inputs:
        with open(path, encoding="utf-8") as fh:
            records.extend(read_records(fh))
    if not records:
        raise ConfigError("no records found in the given inputs")
    sys.stdout.write(emit_table(records))


def _write_report(args, reports):
    if args.report:
        with open(args.report, "a", encoding="utf-8") as fh:
            table = emit_table(reports, fh)
    else:
        table = emit_table(reports)
    sys.stdout.write(table)


def cmd_run(args):
    report = run_experiment(experiment_config(args))
    _write_report(args, [report])
    print(json.dumps({"test_accuracies": report.test_accuracies, "wall_clock": round(report.wall_clock, 3)}))


def cmd_gridsearch(args):
    result = grid_search(experiment_config(args))
    if result.table:
        print(result.format_table())
    _write_report(args, [result.report])


def cmd_train(args):
    config = experiment_config(args)
    if config.method != "none" and (len(config.taus) != 1 or len(config.replace_probs) != 1):
        raise ConfigError("train needs a single --tau and --replace-prob")
    seed = config.seeds[0]  # a single model: the first configured seed
    data = load_data(config)
    train, valid = seed_splits(config, data, seed)
    lm = seed_lm(config, data, train, seed)
    policy = AugmentPolicy(config.taus[0], config.replace_probs[0]) if config.method != "none" else None
    arch = config.classifier_config(len(data.label_names), data.vocab.size)
    model, hist = train_classifier(train, valid, arch, config.train_config(seed, policy), lm=lm, lexicon=data.lexicon)
    model.label_names = tuple(data.label_names)
    info = {"seed": seed, "best_epoch": hist.best_epoch, "valid_acc": hist.valid_acc, "out": args.out}
    if args.out:
        model.save(args.out, data.vocab.digest())
        if not config.data.get("vocab"):
            # the vocabulary was built from the train file; keep it next to the model
            info["vocab_out"] = f"{args.out}.vocab.txt"
            data.vocab.save(info["vocab_out"])
    print(json.dumps(info))


SIMPLE = {
    "make-synthetic": cmd_make_synthetic,
    "pretrain": cmd_pretrain,
    "retrofit": cmd_retrofit,
    "finetune-lm": cmd_finetune_lm,
    "augment": cmd_augment,
    "eval": cmd_eval,
    "dump-topk": cmd_dump_topk,
    "report": cmd_report,
}
EXPERIMENT = {"run": cmd_run, "train": cmd_train, "gridsearch": cmd_gridsearch}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        if args.kernels:
            kernels.use_backend(args.kernels)
        if args.command in SIMPLE:
            SIMPLE[args.command](resolve_simple(args))
        else:
            EXPERIMENT[args.command](args)
    except (ConfigError, ParseError, CheckpointError, bilm.StateError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"ctxaug {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
