"""Experiment configuration: a YAML key tree with command-line overrides.

Key tree (all keys optional except ``data.train`` and ``data.test``)::

    data:
      name: polarity          # dataset column in reports (default: train file stem)
      train: train.tsv
      dev: dev.tsv            # omitted -> seeded validation split of train
      test: test.tsv
      vocab: vocab.txt        # omitted -> built from the train file
      lexicon: synonyms.tsv   # needed by synonym augmentation
      lm: lm.ckpt             # unconditional LM, needed by context augmentations
    model:
      arch: cnn               # cnn | rnn
      cnn: {widths: [3, 4, 5], filters: 32, embed_dim: 32, hidden_dim: 32, dropout: 0.5}
      rnn: {hidden_dim: 32, embed_dim: 32, dropout: 0.5}
    train: {max_epochs: 30, batch_size: 16, lr: 0.005, patience: 5}
    augment:
      method: none            # none | synonym | context | context+label
      tau: [0.5, 1.0, 2.0, uniform]
      replace_prob: [0.05, 0.1, 0.2, 0.3]
    lm_finetune: {epochs: 4, batch_size: 32, lr: 0.01, dropout: 0.1, freeze_pretrained: false, label_dim: 8}
    seeds: [0, 1, 2, 3, 4, 5, 6, 7]
    valid_fraction: 0.1
    max_train: null           # keep only this many training examples per seed
    commands: {}              # per-command flag defaults for the CLI; ignored here

Relative paths, here and in the per-command sections read by the CLI, are
resolved against the config file's directory.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..augment import AUGMENT_METHODS, parse_tau
from ..bilm import LMTrainConfig
from ..classify import CnnConfig, RnnConfig, TrainConfig


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


DEFAULTS = {
    "data": {"name": None, "train": None, "dev": None, "test": None, "vocab": None, "lexicon": None, "lm": None},
    "model": {
        "arch": "cnn",
        "cnn": {"widths": [3, 4, 5], "filters": 32, "embed_dim": 32, "hidden_dim": 32, "dropout": 0.5},
        "rnn": {"hidden_dim": 32, "embed_dim": 32, "dropout": 0.5},
    },
    "train": {"max_epochs": 30, "batch_size": 16, "lr": 0.005, "patience": 5},
    "augment": {"method": "none", "tau": [0.5, 1.0, 2.0, "uniform"], "replace_prob": [0.05, 0.1, 0.2, 0.3]},
    "lm_finetune": {
        "epochs": 4, "batch_size": 32, "lr": 0.01, "dropout": 0.1, "freeze_pretrained": False, "label_dim": 8,
    },
    "seeds": list(range(8)),
    "valid_fraction": 0.1,
    "max_train": None,
}
_PATH_KEYS = ("train", "dev", "test", "vocab", "lexicon", "lm")


def deep_merge(base, override):
    """Recursive dict merge; ``override`` wins and unknown keys are rejected."""
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if key not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {key!r} must be a mapping")
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def set_dotted(tree, dotted, value):
    node = tree
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    arch: str
    cnn: dict
    rnn: dict
    train: dict
    method: str
    taus: tuple
    replace_probs: tuple
    lm_finetune: dict
    seeds: tuple
    valid_fraction: float = 0.1
    max_train: int | None = None
    raw: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.arch not in ("cnn", "rnn"):
            raise ConfigError(f"model.arch must be cnn or rnn, got {self.arch!r}")
        if self.method not in AUGMENT_METHODS:
            raise ConfigError(f"augment.method must be one of {AUGMENT_METHODS}, got {self.method!r}")
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list has duplicates")
        if self.method != "none" and (not self.taus or not self.replace_probs):
            raise ConfigError("tau and replace_prob grids must be nonempty when augmenting")
        if not 0 < self.valid_fraction < 1:
            raise ConfigError("valid_fraction must be in (0, 1)")
        if self.max_train is not None and self.max_train < 1:
            raise ConfigError("max_train must be positive")
        for key in ("train", "test"):
            if not self.data.get(key):
                raise ConfigError(f"data.{key} is required")
        if self.method == "synonym" and not self.data.get("lexicon"):
            raise ConfigError("synonym augmentation needs data.lexicon")
        if self.method.startswith("context"):
            if not self.data.get("lm"):
                raise ConfigError(f"{self.method} augmentation needs data.lm")
            if not self.data.get("vocab"):
                raise ConfigError("data.vocab is required with an LM (it must match the LM's vocabulary)")

    @property
    def dataset_name(self):
        return self.data.get("name") or Path(self.data["train"]).stem

    def with_grid(self, taus, replace_probs):
        tree = copy.deepcopy(self.raw)
        tree["augment"]["tau"] = list(taus)
        tree["augment"]["replace_prob"] = list(replace_probs)
        return from_tree(tree)

    def check_files(self):
        """Raise :class:`ConfigError` naming every configured file that does not exist."""
        missing = [f"data.{k}={self.data[k]}" for k in _PATH_KEYS if self.data.get(k) and not Path(self.data[k]).is_file()]
        if missing:
            raise ConfigError("missing input files: " + ", ".join(missing))

    def classifier_config(self, num_classes, vocab_size):
        try:
            if self.arch == "cnn":
                return CnnConfig(num_classes, vocab_size, **self.cnn)
            return RnnConfig(num_classes, vocab_size, **self.rnn)
        except TypeError as exc:
            raise ConfigError(f"bad model.{self.arch} section: {exc}") from exc

    def train_config(self, seed, policy=None):
        try:
            return TrainConfig(seed=seed, augmentation=self.method, policy=policy, **self.train)
        except TypeError as exc:
            raise ConfigError(f"bad train section: {exc}") from exc

    def lm_config(self, seed):
        opts = {k: v for k, v in self.lm_finetune.items() if k != "label_dim"}
        return LMTrainConfig(seed=seed, **opts)


def from_tree(tree) -> ExperimentConfig:
    merged = deep_merge(DEFAULTS, {k: v for k, v in (tree or {}).items() if k != "commands"})
    try:
        taus = tuple(parse_tau(t) for t in _as_list(merged["augment"]["tau"]))
    except ValueError as exc:
        raise ConfigError(f"augment.tau: {exc}") from exc
    try:
        rps = tuple(float(r) for r in _as_list(merged["augment"]["replace_prob"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"augment.replace_prob: {exc}") from exc
    if any(not 0 <= r <= 1 for r in rps):
        raise ConfigError("replace_prob values must be in [0, 1]")
    return ExperimentConfig(
        data=dict(merged["data"]),
        arch=merged["model"]["arch"],
        cnn=dict(merged["model"]["cnn"]),
        rnn=dict(merged["model"]["rnn"]),
        train=dict(merged["train"]),
        method=merged["augment"]["method"],
        taus=taus,
        replace_probs=rps,
        lm_finetune=dict(merged["lm_finetune"]),
        seeds=tuple(int(s) for s in _as_list(merged["seeds"])),
        valid_fraction=float(merged["valid_fraction"]),
        max_train=merged["max_train"],
        raw=merged,
    )


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_tree(path):
    path = Path(path)
    try:
        tree = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = path.resolve().parent
    for key in _PATH_KEYS:
        val = (tree.get("data") or {}).get(key)
        if val and not Path(val).is_absolute():
            tree["data"][key] = str(base / val)
    return tree


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read a YAML config (optional) and apply ``{dotted.key: value}`` overrides."""
    tree = load_tree(path) if path else {}
    for dotted, value in (overrides or {}).items():
        if value is not None:
            set_dotted(tree, dotted, value)
    return from_tree(tree)
