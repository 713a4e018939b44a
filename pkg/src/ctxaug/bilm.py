"""Bidirectional cloze language model with an optional label pathway.

For position ``i`` of a sentence the model combines a forward LSTM state that
has read ``<bos> w_0 .. w_{i-1}`` and a backward LSTM state that has read
``<eos> w_{n-1} .. w_{i+1}``; ``w_i`` itself is never an input to the
prediction at ``i``. The two states (and, after :func:`retrofit_conditional`,
an embedded class label) feed a ReLU hidden layer and a softmax over the
vocabulary.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from .corpus import BOS, EOS, PAD, LabeledExample, Vocabulary
from .numcore import (
    Adam,
    LSTMParams,
    Tensor,
    affine,
    concat,
    cross_entropy,
    dropout,
    glorot_uniform,
    lstm_bias,
    lstm_sequence,
    matmul,
    no_grad,
    relu,
    reshape,
    softmax_array,
    take_rows,
)

log = logging.getLogger(__name__)

_LABEL_NAMES = ("label.embed", "comb.W_label")


class StateError(RuntimeError):
    """Operation not valid for the model's current (un)conditional state."""


@dataclass(frozen=True)
class BiLMDims:
    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 64
    combiner_dim: int = 64


@dataclass
class LMTrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.005
    dropout: float = 0.1
    max_len: int = 64
    seed: int = 0
    freeze_pretrained: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.max_len < 1:
            raise ValueError("epochs, batch_size and max_len must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class ClozeContext:
    sentence: tuple
    position: int
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sentence", tuple(self.sentence))
        if not 0 <= self.position < len(self.sentence):
            raise ValueError(f"position {self.position} outside sentence of length {len(self.sentence)}")


@dataclass
class BiLM:
    """All weights of the bidirectional LM; ``params`` maps names to tensors."""

    dims: BiLMDims
    params: dict
    num_labels: int = 0
    label_dim: int = 0
    label_names: tuple = ()
    vocab_digest: str | None = None
    history: list = field(default_factory=list, compare=False)

    @classmethod
    def initialize(cls, dims: BiLMDims, seed=0, dtype=np.float32, vocab_digest=None):
        rng = np.random.default_rng(seed)
        e, h, c, v = dims.embed_dim, dims.hidden_dim, dims.combiner_dim, dims.vocab_size
        raw = {
            "embed": rng.uniform(-0.1, 0.1, size=(v, e)).astype(dtype),
            "fwd.W_x": glorot_uniform(rng, (e, 4 * h), dtype),
            "fwd.W_h": glorot_uniform(rng, (h, 4 * h), dtype),
            "fwd.b": lstm_bias(h, dtype),
            "bwd.W_x": glorot_uniform(rng, (e, 4 * h), dtype),
            "bwd.W_h": glorot_uniform(rng, (h, 4 * h), dtype),
            "bwd.b": lstm_bias(h, dtype),
            "comb.W": glorot_uniform(rng, (2 * h, c), dtype),
            "comb.b": np.zeros(c, dtype=dtype),
            "out.W": glorot_uniform(rng, (c, v), dtype),
            "out.b": np.zeros(v, dtype=dtype),
        }
        params = {k: Tensor(a, requires_grad=True, name=k) for k, a in raw.items()}
        return cls(dims, params, vocab_digest=vocab_digest)

    @property
    def conditional(self):
        return self.num_labels > 0

    @property
    def dtype(self):
        return self.params["embed"].dtype

    def _lstm(self, prefix):
        p = self.params
        return LSTMParams(p[f"{prefix}.W_x"], p[f"{prefix}.W_h"], p[f"{prefix}.b"])

    def _check_sentence(self, sentence):
        sentence = np.asarray(sentence, dtype=np.int64)
        if sentence.ndim != 1 or len(sentence) == 0:
            raise ValueError("sentence must be a nonempty sequence of token ids")
        if sentence.min() < 0 or sentence.max() >= self.dims.vocab_size:
            raise ValueError("token id outside the vocabulary")
        return sentence

    def _check_label(self, label):
        if label is None:
            return
        if not self.conditional:
            raise StateError("label given to a model without a label pathway")
        if not 0 <= label < self.num_labels:
            raise ValueError(f"label {label} outside [0, {self.num_labels})")

    # -- core computation -------------------------------------------------
    def _encode(self, sentences):
        """Run both directions over a batch; returns per-position context features.

        Output rows are ordered sentence by sentence, position by position.
        """
        n = len(sentences)
        lengths = np.array([len(s) for s in sentences])
        steps = int(lengths.max())
        fwd_in = np.full((n, steps), PAD, dtype=np.int64)
        bwd_in = np.full((n, steps), PAD, dtype=np.int64)
        fwd_rows, bwd_rows = [], []
        for b, s in enumerate(sentences):
            L = len(s)
            fwd_in[b, 0] = BOS
            fwd_in[b, 1:L] = s[: L - 1]
            bwd_in[b, 0] = EOS
            bwd_in[b, 1:L] = s[::-1][: L - 1]
            pos = np.arange(L)
            fwd_rows.append(pos * n + b)
            bwd_rows.append((L - 1 - pos) * n + b)
        E = self.params["embed"]
        h = self.dims.hidden_dim
        Hf = lstm_sequence(take_rows(E, fwd_in.T), self._lstm("fwd"))
        Hb = lstm_sequence(take_rows(E, bwd_in.T), self._lstm("bwd"))
        fwd_states = take_rows(reshape(Hf, (steps * n, h)), np.concatenate(fwd_rows))
        bwd_states = take_rows(reshape(Hb, (steps * n, h)), np.concatenate(bwd_rows))
        return fwd_states, bwd_states, lengths

    def _logits(self, sentences, labels=None, dropout_rate=0.0, rng=None):
        fwd_states, bwd_states, lengths = self._encode(sentences)
        p = self.params
        train = dropout_rate > 0
        ctx = dropout(concat([fwd_states, bwd_states], axis=1), dropout_rate, rng, train)
        pre = affine(ctx, p["comb.W"], p["comb.b"])
        if labels is not None and self.conditional:
            per_pos = np.repeat(np.asarray(labels, dtype=np.int64), lengths)
            pre = pre + matmul(take_rows(p["label.embed"], per_pos), p["comb.W_label"])
        hidden = dropout(relu(pre), dropout_rate, rng, train)
        return affine(hidden, p["out.W"], p["out.b"]), lengths

    # -- public API -------------------------------------------------------
    def contextual_states(self, sentence):
        """Forward and backward states for every position, as ``[n, h]`` arrays."""
        sentence = self._check_sentence(sentence)
        with no_grad():
            f, b, _ = self._encode([sentence])
        return f.data.copy(), b.data.copy()

    def predict_all(self, sentence, label=None):
        """Cloze distributions ``[n, V]`` for every position of one sentence."""
        return self.predict_batch([sentence], None if label is None else [label])[0]

    def predict_batch(self, sentences, labels=None):
        """Cloze distributions for many sentences in one pass; list of ``[n_i, V]``."""
        sentences = [self._check_sentence(s) for s in sentences]
        if labels is not None:
            if len(labels) != len(sentences):
                raise ValueError("need one label per sentence")
            for y in labels:
                self._check_label(y)
        with no_grad():
            logits, lengths = self._logits(sentences, labels)
        probs = softmax_array(logits.data.astype(np.float64))
        return np.split(probs, np.cumsum(lengths)[:-1])

    def predict_distribution(self, ctx: ClozeContext):
        return self.predict_all(ctx.sentence, ctx.label)[ctx.position]

    def lm_loss(self, sentence, label=None):
        """Mean over positions of ``-log p(w_i | [y,] S without w_i)``, differentiable."""
        sentence = self._check_sentence(sentence)
        self._check_label(label)
        logits, _ = self._logits([sentence], None if label is None else [label])
        return cross_entropy(logits, sentence)

    def topk(self, ctx: ClozeContext, k):
        """``k`` most probable (token id, probability) pairs; ties go to the lower id."""
        if not 1 <= k <= self.dims.vocab_size:
            raise ValueError(f"k must be in [1, {self.dims.vocab_size}]")
        dist = self.predict_distribution(ctx)
        order = np.argsort(-dist, kind="stable")[:k]
        return [(int(i), float(dist[i])) for i in order]

    def trainable(self, freeze_pretrained=False):
        if freeze_pretrained:
            if not self.conditional:
                raise StateError("nothing to train: pretrained weights frozen and no label pathway")
            return [self.params[n] for n in _LABEL_NAMES]
        return list(self.params.values())

    def copy(self):
        params = {k: Tensor(t.data.copy(), requires_grad=True, name=k) for k, t in self.params.items()}
        return BiLM(self.dims, params, self.num_labels, self.label_dim, self.label_names, self.vocab_digest)

    # -- persistence ------------------------------------------------------
    def save(self, path):
        meta = {
            "kind": "bilm",
            "dims": asdict(self.dims),
            "conditional": self.conditional,
            "num_labels": self.num_labels,
            "label_dim": self.label_dim,
            "label_names": list(self.label_names),
            "vocab_digest": self.vocab_digest,
        }
        checkpoint.save_tensors(path, {k: t.data for k, t in self.params.items()}, meta)

    @classmethod
    def load(cls, path, vocab: Vocabulary | None):
        """Load a checkpoint, rejecting it if it was trained on a different vocabulary.

        Pass ``vocab=None`` to skip the vocabulary check.
        """
        tensors, meta = checkpoint.load_tensors(path)
        if meta.get("kind") != "bilm":
            raise checkpoint.CheckpointError(f"{path} is not a language-model checkpoint")
        if vocab is not None and meta.get("vocab_digest") != vocab.digest():
            raise checkpoint.CheckpointError(f"{path} was trained with a different vocabulary")
        dims = BiLMDims(**meta["dims"])
        model = cls(
            dims,
            {},
            num_labels=meta["num_labels"],
            label_dim=meta["label_dim"],
            label_names=tuple(meta.get("label_names", ())),
            vocab_digest=meta.get("vocab_digest"),
        )
        expected = _expected_shapes(dims, model.num_labels, model.label_dim)
        if set(tensors) != set(expected):
            raise checkpoint.CheckpointError(f"{path}: unexpected tensor set {sorted(tensors)}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise checkpoint.CheckpointError(
                    f"{path}: tensor {name} has shape {tensors[name].shape}, expected {shape}"
                )
        model.params = {n: Tensor(tensors[n], requires_grad=True, name=n) for n in expected}
        return model


def _expected_shapes(dims, num_labels, label_dim):
    e, h, c, v = dims.embed_dim, dims.hidden_dim, dims.combiner_dim, dims.vocab_size
    shapes = {
        "embed": (v, e),
        "fwd.W_x": (e, 4 * h), "fwd.W_h": (h, 4 * h), "fwd.b": (4 * h,),
        "bwd.W_x": (e, 4 * h), "bwd.W_h": (h, 4 * h), "bwd.b": (4 * h,),
        "comb.W": (2 * h, c), "comb.b": (c,),
        "out.W": (c, v), "out.b": (v,),
    }
    if num_labels:
        shapes["label.embed"] = (num_labels, label_dim)
        shapes["comb.W_label"] = (label_dim, c)
    return shapes


def retrofit_conditional(model: BiLM, num_labels, label_dim=16, seed=0, label_names=()):
    """Add a label pathway whose combiner weights start at zero.

    Existing tensors are copied unchanged, so every label initially yields
    exactly the unconditional distribution.
    """
    if model.conditional:
        raise StateError("model already has a label pathway")
    if num_labels < 2:
        raise ValueError("need at least two labels")
    if label_dim < 1:
        raise ValueError("label_dim must be positive")
    if label_names and len(label_names) != num_labels:
        raise ValueError("label_names must have one entry per label")
    out = model.copy()
    rng = np.random.default_rng(seed)
    dtype = model.dtype
    out.params["label.embed"] = Tensor(
        rng.normal(0.0, 0.1, size=(num_labels, label_dim)).astype(dtype), requires_grad=True, name="label.embed"
    )
    out.params["comb.W_label"] = Tensor(
        np.zeros((label_dim, model.dims.combiner_dim), dtype=dtype), requires_grad=True, name="comb.W_label"
    )
    out.num_labels = num_labels
    out.label_dim = label_dim
    out.label_names = tuple(label_names)
    return out


def _train(model: BiLM, sentences, labels, config: LMTrainConfig):
    order_rng = np.random.default_rng([config.seed, 0])
    drop_rng = np.random.default_rng([config.seed, 1])
    data = [np.asarray(s[: config.max_len], dtype=np.int64) for s in sentences]
    opt = Adam(model.trainable(config.freeze_pretrained), lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(data))
        total, count = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch = [data[i] for i in idx]
            batch_labels = None if labels is None else [labels[i] for i in idx]
            logits, _ = model._logits(batch, batch_labels, config.dropout, drop_rng)
            targets = np.concatenate(batch)
            loss = cross_entropy(logits, targets)
            loss.backward()
            opt.step()
            total += float(loss.data) * len(targets)
            count += len(targets)
        history.append(total / count)
        log.info("lm epoch %d loss %.4f", epoch + 1, history[-1])
    model.history = history
    return model


def pretrain(corpus, config: LMTrainConfig, dims: BiLMDims, vocab_digest=None, dtype=np.float32):
    """Train an unconditional model from scratch on token-id sentences."""
    corpus = [s for s in corpus if len(s) > 0]
    if not corpus:
        raise ValueError("pretraining corpus is empty")
    model = BiLM.initialize(dims, seed=config.seed, dtype=dtype, vocab_digest=vocab_digest)
    return _train(model, corpus, None, config)


def finetune_unconditional(model: BiLM, sentences, config: LMTrainConfig):
    """Continue unconditional training (label-free) from ``model``; returns a new model."""
    if model.conditional:
        raise StateError("model has a label pathway; use finetune_conditional")
    sentences = [s for s in sentences if len(s) > 0]
    if not sentences:
        raise ValueError("no sentences to fine-tune on")
    return _train(model.copy(), sentences, None, config)


def finetune_conditional(model: BiLM, examples, config: LMTrainConfig):
    """Train a retrofitted model with each sentence's gold label fed to the label pathway."""
    if not model.conditional:
        raise StateError("model has no label pathway; call retrofit_conditional first")
    examples = list(examples)
    if not examples:
        raise ValueError("no labeled examples to fine-tune on")
    for ex in examples:
        if not 0 <= ex.label < model.num_labels:
            raise ValueError(f"example label {ex.label} outside [0, {model.num_labels})")
    sentences = [np.asarray(ex.tokens, dtype=np.int64) for ex in examples]
    labels = [ex.label for ex in examples]
    return _train(model.copy(), sentences, labels, config)


def mean_loss(model: BiLM, sentences, labels=None):
    """Token-weighted mean cloze loss over a set of sentences (no dropout, no grad)."""
    total, count = 0.0, 0
    with no_grad():
        for i in range(0, len(sentences), 64):
            batch = [np.asarray(s, dtype=np.int64) for s in sentences[i : i + 64]]
            lab = None if labels is None else labels[i : i + 64]
            logits, _ = model._logits(batch, lab)
            targets = np.concatenate(batch)
            total += float(cross_entropy(logits, targets).data) * len(targets)
            count += len(targets)
    return total / count


__all__ = [
    "BiLM", "BiLMDims", "ClozeContext", "LMTrainConfig", "LabeledExample", "StateError",
    "finetune_conditional", "finetune_unconditional", "mean_loss", "pretrain", "retrofit_conditional",
]
