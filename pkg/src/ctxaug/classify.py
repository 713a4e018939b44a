"""CNN and LSTM sentence classifiers with an augmenting, early-stopping trainer."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from .augment import AUGMENT_METHODS, AugmentPolicy, augment_examples
from .corpus import PAD
from .numcore import (
    Adam,
    LSTMParams,
    Tensor,
    affine,
    concat,
    conv1d,
    cross_entropy,
    dropout,
    glorot_uniform,
    lstm_bias,
    lstm_sequence,
    masked_max_time,
    no_grad,
    relu,
    reshape,
    take_rows,
)

log = logging.getLogger(__name__)

class ConfigurationError(ValueError):
    """Training was requested without the resources its configuration needs."""


@dataclass(frozen=True)
class CnnConfig:
    num_classes: int
    vocab_size: int
    widths: tuple = (3, 4, 5)
    filters: int = 32
    embed_dim: int = 32
    hidden_dim: int = 32
    dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or min(self.widths) < 1:
            raise ValueError("filter widths must be >= 1")
        if min(self.filters, self.embed_dim, self.hidden_dim, self.num_classes, self.vocab_size) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class RnnConfig:
    num_classes: int
    vocab_size: int
    hidden_dim: int = 32
    embed_dim: int = 32
    dropout: float = 0.5

    def __post_init__(self):
        if min(self.hidden_dim, self.embed_dim, self.num_classes, self.vocab_size) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    batch_size: int = 16
    lr: float = 0.005
    patience: int = 5
    seed: int = 0
    augmentation: str = "none"
    policy: AugmentPolicy | None = None

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be >= 1")
        if self.augmentation not in AUGMENT_METHODS:
            raise ValueError(f"augmentation must be one of {AUGMENT_METHODS}")
        if self.augmentation != "none" and self.policy is None:
            raise ValueError(f"augmentation {self.augmentation!r} needs a policy")


def _rngs(seed):
    return {name: np.random.default_rng([seed, k]) for k, name in enumerate(("init", "order", "dropout", "augment"))}


@dataclass
class Classifier:
    config: object
    params: dict
    label_names: tuple = ()

    @property
    def arch(self):
        return "cnn" if isinstance(self.config, CnnConfig) else "rnn"

    @classmethod
    def initialize(cls, config, seed=0, dtype=np.float32):
        rng = np.random.default_rng([seed, 0])
        c = config
        raw = {"embed": rng.uniform(-0.1, 0.1, size=(c.vocab_size, c.embed_dim)).astype(dtype)}
        if isinstance(c, CnnConfig):
            for w in c.widths:
                raw[f"conv{w}.W"] = glorot_uniform(rng, (w * c.embed_dim, c.filters), dtype)
                raw[f"conv{w}.b"] = np.zeros(c.filters, dtype=dtype)
            pooled = c.filters * len(c.widths)
            raw["ff.W"] = glorot_uniform(rng, (pooled, c.hidden_dim), dtype)
            raw["ff.b"] = np.zeros(c.hidden_dim, dtype=dtype)
            raw["out.W"] = glorot_uniform(rng, (c.hidden_dim, c.num_classes), dtype)
        elif isinstance(c, RnnConfig):
            raw["lstm.W_x"] = glorot_uniform(rng, (c.embed_dim, 4 * c.hidden_dim), dtype)
            raw["lstm.W_h"] = glorot_uniform(rng, (c.hidden_dim, 4 * c.hidden_dim), dtype)
            raw["lstm.b"] = lstm_bias(c.hidden_dim, dtype)
            raw["out.W"] = glorot_uniform(rng, (c.hidden_dim, c.num_classes), dtype)
        else:
            raise TypeError(f"unsupported classifier config {type(c).__name__}")
        raw["out.b"] = np.zeros(c.num_classes, dtype=dtype)
        return cls(config, {k: Tensor(v, requires_grad=True, name=k) for k, v in raw.items()})

    def forward(self, sentences, train=False, rng=None):
        """Class logits ``[n, K]`` for a batch of token-id sequences."""
        if not sentences:
            raise ValueError("empty batch")
        lengths = np.array([len(s) for s in sentences])
        if lengths.min() < 1:
            raise ValueError("sentences must be nonempty")
        if isinstance(self.config, CnnConfig):
            return self._cnn(sentences, lengths, train, rng)
        return self._rnn(sentences, lengths, train, rng)

    def _cnn(self, sentences, lengths, train, rng):
        c, p = self.config, self.params
        widest = max(c.widths)
        # PAD-extend short sentences to the widest filter; further padding is masked
        eff = np.maximum(lengths, widest)
        steps = int(eff.max())
        ids = np.full((len(sentences), steps), PAD, dtype=np.int64)
        for b, s in enumerate(sentences):
            ids[b, : len(s)] = s
        x = take_rows(p["embed"], ids)
        pooled = []
        for w in c.widths:
            fmap = relu(conv1d(x, p[f"conv{w}.W"], p[f"conv{w}.b"], w))
            valid = np.arange(steps - w + 1)[None, :] <= (eff - w)[:, None]
            pooled.append(masked_max_time(fmap, valid))
        rate = c.dropout if train else 0.0
        feats = dropout(concat(pooled, axis=1), rate, rng, train)
        hidden = dropout(relu(affine(feats, p["ff.W"], p["ff.b"])), rate, rng, train)
        return affine(hidden, p["out.W"], p["out.b"])

    def _rnn(self, sentences, lengths, train, rng):
        c, p = self.config, self.params
        n, steps = len(sentences), int(lengths.max())
        ids = np.full((steps, n), PAD, dtype=np.int64)
        for b, s in enumerate(sentences):
            ids[: len(s), b] = s
        H = lstm_sequence(take_rows(p["embed"], ids), LSTMParams(p["lstm.W_x"], p["lstm.W_h"], p["lstm.b"]))
        last = take_rows(reshape(H, (steps * n, c.hidden_dim)), (lengths - 1) * n + np.arange(n))
        rate = c.dropout if train else 0.0
        feats = dropout(last, rate, rng, train)
        return affine(feats, p["out.W"], p["out.b"])

    def predict(self, sentences, batch_size=256):
        preds = []
        with no_grad():
            for i in range(0, len(sentences), batch_size):
                logits = self.forward(sentences[i : i + batch_size]).data
                preds.append(np.argmax(logits, axis=1))
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    def snapshot(self):
        return {k: t.data.copy() for k, t in self.params.items()}

    def restore(self, snap):
        for k, arr in snap.items():
            self.params[k].data[...] = arr

    def save(self, path, vocab_digest=None):
        meta = {
            "kind": "classifier", "arch": self.arch, "config": asdict(self.config), "vocab_digest": vocab_digest,
            "label_names": list(self.label_names),
        }
        checkpoint.save_tensors(path, self.snapshot(), meta)

    @classmethod
    def load(cls, path, vocab=None):
        tensors, meta = checkpoint.load_tensors(path)
        if meta.get("kind") != "classifier":
            raise checkpoint.CheckpointError(f"{path} is not a classifier checkpoint")
        if vocab is not None and meta.get("vocab_digest") not in (None, vocab.digest()):
            raise checkpoint.CheckpointError(f"{path} was trained with a different vocabulary")
        cfg_cls = CnnConfig if meta["arch"] == "cnn" else RnnConfig
        config = cfg_cls(**meta["config"])
        model = cls.initialize(config)
        model.label_names = tuple(meta.get("label_names", ()))
        if set(tensors) != set(model.params):
            raise checkpoint.CheckpointError(f"{path}: unexpected tensor set {sorted(tensors)}")
        for name, t in model.params.items():
            if tensors[name].shape != t.shape:
                raise checkpoint.CheckpointError(f"{path}: tensor {name} has shape {tensors[name].shape}")
            t.data = tensors[name]
        return model


def cnn_forward(sentences, model: Classifier, train_mode=False, rng=None):
    if not isinstance(model.config, CnnConfig):
        raise TypeError("model is not a CNN classifier")
    return model.forward(sentences, train_mode, rng)


def rnn_forward(sentences, model: Classifier, train_mode=False, rng=None):
    if not isinstance(model.config, RnnConfig):
        raise TypeError("model is not an LSTM classifier")
    return model.forward(sentences, train_mode, rng)


def evaluate(model: Classifier, examples):
    """Accuracy of argmax predictions (first class wins ties); no dropout, no augmentation."""
    examples = list(examples)
    if not examples:
        raise ValueError("cannot evaluate on an empty set")
    preds = model.predict([ex.tokens for ex in examples])
    gold = np.array([ex.label for ex in examples])
    return float(np.mean(preds == gold))


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    valid_acc: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_valid_acc(self):
        return self.valid_acc[self.best_epoch]

    def to_dict(self):
        return asdict(self)


def train_classifier(train, valid, arch_config, config: TrainConfig, lm=None, lexicon=None, dtype=np.float32):
    """Train with Adam and early stopping on validation accuracy.

    When an augmentation is configured, every minibatch is replaced by a fresh
    augmentation of itself before the forward pass. Returns the snapshot with
    the best validation accuracy (earliest on ties) and the per-epoch history.
    """
    aug = config.augmentation
    if aug == "synonym" and lexicon is None:
        raise ConfigurationError("synonym augmentation needs a lexicon")
    if aug in ("context", "context+label") and lm is None:
        raise ConfigurationError("contextual augmentation needs a language model")
    if aug == "context+label" and not lm.conditional:
        raise ConfigurationError("context+label augmentation needs a label-conditional LM")
    train, valid = list(train), list(valid)
    if not train or not valid:
        raise ValueError("train and validation sets must be nonempty")
    rngs = _rngs(config.seed)
    model = Classifier.initialize(arch_config, seed=config.seed, dtype=dtype)
    opt = Adam(list(model.params.values()), lr=config.lr)
    history = TrainHistory()
    best_acc, best_snap, since_best = -1.0, None, 0
    for epoch in range(config.max_epochs):
        perm = rngs["order"].permutation(len(train))
        total, count = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            batch = [train[i] for i in perm[start : start + config.batch_size]]
            batch = augment_examples(batch, aug, rngs["augment"], lm=lm, lexicon=lexicon, policy=config.policy)
            logits = model.forward([ex.tokens for ex in batch], train=True, rng=rngs["dropout"])
            loss = cross_entropy(logits, [ex.label for ex in batch])
            loss.backward()
            opt.step()
            total += float(loss.data) * len(batch)
            count += len(batch)
        acc = evaluate(model, valid)
        history.train_loss.append(total / count)
        history.valid_acc.append(acc)
        if acc > best_acc:
            best_acc, best_snap, since_best = acc, model.snapshot(), 0
            history.best_epoch = epoch
        else:
            since_best += 1
        log.debug("epoch %d loss %.4f valid %.4f", epoch + 1, total / count, acc)
        if since_best >= config.patience:
            break
    model.restore(best_snap)
    return model, history
