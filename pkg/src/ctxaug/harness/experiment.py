"""Multi-seed experiment runs, augmentation grid search, tables and top-k dumps."""
from __future__ import annotations

import io
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import bilm
from ..augment import ARGMAX, AugmentPolicy, format_tau, load_synonym_lexicon
from ..bilm import BiLM, ClozeContext, StateError
from ..classify import evaluate, train_classifier
from ..corpus import Vocabulary, build_vocab, encode, load_labeled_tsv, split_train_valid, tokenize
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    model: str
    augmentation: str
    dataset: str
    tau: object
    replace_prob: float | None
    seeds: tuple
    valid_accuracies: tuple
    test_accuracies: tuple
    histories: tuple = ()
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def seed_count(self):
        return len(self.seeds)

    @property
    def mean(self):
        return float(np.mean(self.test_accuracies))

    @property
    def std(self):
        # population std over seeds
        return float(np.std(self.test_accuracies))

    @property
    def valid_mean(self):
        return float(np.mean(self.valid_accuracies))

    def record(self):
        return {
            "model": self.model,
            "augmentation": self.augmentation,
            "dataset": self.dataset,
            "tau": None if self.tau is None else format_tau(self.tau),
            "replace_prob": self.replace_prob,
            "seed_count": self.seed_count,
            "mean_accuracy": self.mean,
            "std_accuracy": self.std,
        }


@dataclass
class LoadedData:
    vocab: Vocabulary
    label_names: tuple
    train: list
    dev: list | None
    lexicon: dict | None
    lm: BiLM | None


def load_data(config: ExperimentConfig) -> LoadedData:
    """Read every input except the test file (kept out of reach until selection is done)."""
    config.check_files()
    d = config.data
    if d.get("vocab"):
        vocab = Vocabulary.load(d["vocab"])
    else:
        raw, _ = load_labeled_tsv(d["train"])
        vocab = build_vocab([ex.tokens for ex in raw])
    train, meta = load_labeled_tsv(d["train"], vocab)
    dev = None
    if d.get("dev"):
        dev, _ = load_labeled_tsv(d["dev"], vocab, meta.label_names)
    lexicon = load_synonym_lexicon(d["lexicon"], vocab) if d.get("lexicon") else None
    lm = BiLM.load(d["lm"], vocab) if d.get("lm") else None
    if lm is not None and lm.conditional:
        raise ConfigError("data.lm must be an unconditional checkpoint; the label pathway is added per seed")
    return LoadedData(vocab, meta.label_names, train, dev, lexicon, lm)


def load_test(config: ExperimentConfig, data: LoadedData):
    test, _ = load_labeled_tsv(config.data["test"], data.vocab, data.label_names)
    return test


def seed_splits(config: ExperimentConfig, data: LoadedData, seed):
    """Train/validation lists for one seed; a pure function of the config."""
    if data.dev is None:
        train, valid = split_train_valid(data.train, config.valid_fraction, seed=seed)
    else:
        order = np.random.default_rng([seed, 3]).permutation(len(data.train))
        train, valid = [data.train[i] for i in order], data.dev
    if config.max_train is not None:
        train = train[: config.max_train]
    return train, valid


def seed_lm(config: ExperimentConfig, data: LoadedData, train, seed):
    """The augmenting LM for one seed: fine-tuned on that seed's training split."""
    if config.method == "context":
        return bilm.finetune_unconditional(data.lm, [ex.tokens for ex in train], config.lm_config(seed))
    if config.method == "context+label":
        cond = bilm.retrofit_conditional(
            data.lm, len(data.label_names), config.lm_finetune.get("label_dim", 8), seed=seed,
            label_names=data.label_names,
        )
        return bilm.finetune_conditional(cond, train, config.lm_config(seed))
    return None


class _SeedCache:
    def __init__(self, config, data):
        self.config, self.data, self._cache = config, data, {}

    def get(self, seed):
        if seed not in self._cache:
            train, valid = seed_splits(self.config, self.data, seed)
            self._cache[seed] = (train, valid, seed_lm(self.config, self.data, train, seed))
        return self._cache[seed]


def _train_cell(config, data, cache, policy):
    models, valid_accs, histories = [], [], []
    for seed in config.seeds:
        train, valid, lm = cache.get(seed)
        arch = config.classifier_config(len(data.label_names), data.vocab.size)
        model, hist = train_classifier(
            train, valid, arch, config.train_config(seed, policy), lm=lm, lexicon=data.lexicon
        )
        models.append(model)
        valid_accs.append(hist.best_valid_acc)
        histories.append(hist.to_dict())
    return models, tuple(valid_accs), tuple(histories)


def _policy(tau, rp):
    return None if tau is None else AugmentPolicy(tau, rp)


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Train one classifier per seed and report test accuracy statistics.

    With augmentation the config must name exactly one (tau, replace_prob)
    pair; use :func:`grid_search` for larger grids.
    """
    start = time.perf_counter()
    if config.method == "none":
        tau = rp = None
    else:
        if len(config.taus) != 1 or len(config.replace_probs) != 1:
            raise ConfigError("run_experiment needs a single tau and replace_prob; use grid_search for grids")
        tau, rp = config.taus[0], config.replace_probs[0]
    data = load_data(config)
    test = load_test(config, data)
    models, valid_accs, histories = _train_cell(config, data, _SeedCache(config, data), _policy(tau, rp))
    tests = tuple(evaluate(m, test) for m in models)
    return RunReport(
        config.arch, config.method, config.dataset_name, tau, rp, config.seeds, valid_accs, tests, histories,
        time.perf_counter() - start,
    )


def _tau_key(tau):
    if tau == ARGMAX:
        return 0.0
    return float(tau)


def select_cell(table):
    """Best ``(tau, replace_prob)`` row by validation mean; ties prefer smaller replace_prob, then smaller tau."""
    if not table:
        raise ValueError("empty grid")
    tau, rp, _ = min(table, key=lambda row: (-row[2], row[1], _tau_key(row[0])))
    return tau, rp


@dataclass
class GridResult:
    best: AugmentPolicy | None
    table: list  # (tau, replace_prob, mean validation accuracy)
    report: RunReport
    cell_histories: dict = field(default_factory=dict, repr=False)  # (tau, replace_prob) -> per-seed histories

    def format_table(self):
        lines = [f"{'tau':>10} {'replace_prob':>12} {'valid_mean':>10}"]
        for tau, rp, mean in self.table:
            lines.append(f"{format_tau(tau):>10} {rp:>12g} {mean:>10.4f}")
        return "\n".join(lines)


def grid_search(config: ExperimentConfig) -> GridResult:
    """Select (tau, replace_prob) by mean validation accuracy over seeds, then test that pair only.

    Ties prefer the smaller replace_prob, then the smaller tau. Each seed's
    split and fine-tuned LM are shared by all grid cells.
    """
    start = time.perf_counter()
    data = load_data(config)
    cache = _SeedCache(config, data)
    if config.method == "none":
        cells = [(None, None)]
    else:
        cells = [(t, r) for t in config.taus for r in config.replace_probs]
    results = {}
    for tau, rp in cells:
        results[(tau, rp)] = _train_cell(config, data, cache, _policy(tau, rp))
        log.info("cell tau=%s p=%s valid %.4f", tau, rp, np.mean(results[(tau, rp)][1]))
    table = [(t, r, float(np.mean(results[(t, r)][1]))) for t, r in cells]
    if config.method == "none":
        best_tau = best_rp = None
    else:
        best_tau, best_rp = select_cell(table)
    models, valid_accs, histories = results[(best_tau, best_rp)]
    test = load_test(config, data)
    tests = tuple(evaluate(m, test) for m in models)
    report = RunReport(
        config.arch, config.method, config.dataset_name, best_tau, best_rp, config.seeds, valid_accs, tests,
        histories, time.perf_counter() - start,
    )
    return GridResult(
        _policy(best_tau, best_rp), table if config.method != "none" else [], report,
        {cell: res[2] for cell, res in results.items()},
    )


def emit_table(reports, stream=None):
    """Write one JSON record per report, then return an aligned table.

    Table rows are (model, augmentation); columns are datasets in first-seen
    order plus ``Avg.``, the mean over that row's dataset columns. Accuracies
    are shown in percent.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to tabulate")
    records = [r.record() if isinstance(r, RunReport) else dict(r) for r in reports]
    for rec in records:
        for key in ("mean_accuracy", "std_accuracy"):
            if not math.isfinite(rec[key]):
                raise ValueError(f"non-finite {key} in report for {rec['dataset']}")
    if stream is not None:
        for rec in records:
            stream.write(json.dumps(rec, sort_keys=True) + "\n")
    datasets = list(dict.fromkeys(rec["dataset"] for rec in records))
    header = ["Model", *datasets, "Avg."]
    body = []
    for (model, aug), cols, avg in table_rows(records):
        cells = [f"{100 * cols[d]:.2f}" if d in cols else "-" for d in datasets]
        body.append([f"{model.upper()} {aug}", *cells, f"{100 * avg:.2f}"])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    out = io.StringIO()
    for row in [header, *body]:
        first = row[0].ljust(widths[0])
        out.write("  ".join([first, *(c.rjust(w) for c, w in zip(row[1:], widths[1:]))]) + "\n")
    return out.getvalue()


def table_rows(reports):
    """``((model, augmentation), {dataset: mean}, average)`` per table row."""
    records = [r.record() if isinstance(r, RunReport) else dict(r) for r in reports]
    datasets = list(dict.fromkeys(rec["dataset"] for rec in records))
    rows = {}
    for rec in records:
        rows.setdefault((rec["model"], rec["augmentation"]), {})[rec["dataset"]] = rec["mean_accuracy"]
    return [(key, cols, float(np.mean([cols[d] for d in datasets if d in cols]))) for key, cols in rows.items()]


def read_records(stream):
    return [json.loads(line) for line in stream if line.strip()]


def dump_predictions(sentence, lm: BiLM, vocab: Vocabulary, labels, k=10):
    """Top-``k`` (token, probability) lists per position and label.

    Returns ``(listing, text)``: ``listing[i][label]`` is the list for
    position ``i``; ``text`` shows the labels side by side per position.
    """
    if not lm.conditional:
        raise StateError("top-k dumps need a label-conditional LM")
    tokens = tokenize(sentence) if isinstance(sentence, str) else list(sentence)
    if not tokens:
        raise ValueError("sentence is empty")
    names = list(lm.label_names) or [str(i) for i in range(lm.num_labels)]
    label_ids = []
    for lab in labels:
        if lab in names:
            label_ids.append(names.index(lab))
        elif isinstance(lab, int) or str(lab).isdigit():
            label_ids.append(int(lab))
        else:
            raise ValueError(f"unknown label {lab!r}; known: {names}")
    ids = encode(tokens, vocab)
    listing = []
    for pos in range(len(ids)):
        per_label = {}
        for name, lid in zip(labels, label_ids):
            top = lm.topk(ClozeContext(ids, pos, lid), k)
            per_label[str(name)] = [(vocab.token(int(t)), float(p)) for t, p in top]
        listing.append(per_label)
    out = io.StringIO()
    for pos, tok in enumerate(tokens):
        out.write(f"[{pos}] {tok}\n")
        for name, entries in listing[pos].items():
            out.write(f"  {name:>6}: " + " ".join(f"{t}({p:.3f})" for t, p in entries) + "\n")
    return listing, out.getvalue()
