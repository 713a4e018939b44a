"""Contextual (LM-driven) and synonym-lexicon word replacement."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bilm import BiLM, StateError
from .corpus import LabeledExample, ParseError, Vocabulary
from .numcore import kernels

UNIFORM = math.inf
ARGMAX = "argmax"
AUGMENT_METHODS = ("none", "synonym", "context", "context+label")


def parse_tau(tau):
    """Normalize a temperature: positive float, ``inf``/"uniform", or "argmax" (the zero limit)."""
    if isinstance(tau, str):
        key = tau.strip().lower()
        if key in ("uniform", "inf", "infinity"):
            return UNIFORM
        if key in ("argmax", "greedy", "0+"):
            return ARGMAX
        tau = float(key)
    if tau == ARGMAX:
        return ARGMAX
    tau = float(tau)
    if math.isnan(tau) or tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return tau


def format_tau(tau):
    tau = parse_tau(tau)
    if tau == ARGMAX:
        return "argmax"
    if tau == UNIFORM:
        return "uniform"
    return repr(float(tau))


@dataclass(frozen=True)
class AugmentPolicy:
    tau: object = 1.0
    replace_prob: float = 0.1
    use_label: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tau", parse_tau(self.tau))
        if not 0 <= self.replace_prob <= 1:
            raise ValueError(f"replace_prob must be in [0, 1], got {self.replace_prob}")


def anneal(dist, tau):
    """Reshape ``dist`` to be proportional to ``dist ** (1/tau)``, computed in log space.

    ``tau=inf`` gives the uniform distribution over the support of ``dist``;
    ``tau="argmax"`` gives a one-hot on the first maximum. Works row-wise on
    2-D input.
    """
    tau = parse_tau(tau)
    p = np.asarray(dist, dtype=np.float64)
    support = p > 0
    if tau == UNIFORM:
        out = support.astype(np.float64)
        return out / out.sum(axis=-1, keepdims=True)
    if tau == ARGMAX:
        out = np.zeros_like(p)
        idx = np.argmax(p, axis=-1)
        np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
        return out
    if tau == 1.0:
        return p / p.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        logits = np.log(p) / tau
    logits = logits - logits.max(axis=-1, keepdims=True)
    # floor keeps tiny in-support entries from underflowing to zero
    out = np.where(support, np.maximum(np.exp(logits), np.finfo(np.float64).tiny), 0.0)
    return out / out.sum(axis=-1, keepdims=True)


def sample_index(dist, rng):
    """Draw one index with probability ``dist[i]`` by inverse-CDF sampling."""
    dist = np.asarray(dist, dtype=np.float64)
    return int(kernels.sample_rows(dist[None, :], np.array([rng.random()]))[0])


def _as_tokens(example):
    return tuple(example.tokens if isinstance(example, LabeledExample) else example)


def contextual_augment_batch(examples, lm: BiLM, policy: AugmentPolicy, rng, return_events=False):
    """Augment many examples with one LM pass.

    For each example, in order, draws one uniform per position to decide
    replacement and then one uniform per selected position to sample the
    replacement. Every distribution comes from the original sentence, so all
    replacements of a sentence are applied simultaneously. Consumes the
    generator identically to calling :func:`contextual_augment` per example.
    """
    examples = list(examples)
    if not examples:
        return ([], []) if return_events else []
    if policy.use_label:
        if not lm.conditional:
            raise StateError("label-conditional augmentation needs a retrofitted LM")
        labels = []
        for ex in examples:
            if getattr(ex, "label", None) is None:
                raise StateError("label-conditional augmentation needs labeled examples")
            labels.append(ex.label)
    else:
        labels = None
    sentences = [_as_tokens(ex) for ex in examples]
    if policy.replace_prob == 0:
        # identity regardless of tau; still consume randomness for a stable stream
        events = [rng.random(len(s)) < 0 for s in sentences]
        out = [tuple(s) for s in sentences]
        return (out, events) if return_events else out
    dists = lm.predict_batch(sentences, labels)
    out, events = [], []
    for sent, dist in zip(sentences, dists):
        chosen = rng.random(len(sent)) < policy.replace_prob
        new = np.array(sent, dtype=np.int64)
        if chosen.any():
            annealed = anneal(dist[chosen], policy.tau)
            new[chosen] = kernels.sample_rows(annealed, rng.random(int(chosen.sum())))
        out.append(tuple(int(t) for t in new))
        events.append(chosen)
    return (out, events) if return_events else out


def contextual_augment(example, lm: BiLM, policy: AugmentPolicy, rng, return_events=False):
    """Replace each word with probability ``policy.replace_prob`` by an annealed LM sample.

    Returns the new token-id tuple; the input example is not modified.
    """
    if len(_as_tokens(example)) == 0:
        raise ValueError("cannot augment an empty sentence")
    res = contextual_augment_batch([example], lm, policy, rng, return_events)
    if return_events:
        return res[0][0], res[1][0]
    return res[0]


class SynonymLexicon(dict):
    """Token id -> tuple of substitute token ids (never empty)."""

    def __setitem__(self, key, value):
        value = tuple(value)
        if not value:
            raise ValueError("a lexicon entry needs at least one substitute")
        super().__setitem__(key, value)


def load_synonym_lexicon(path, vocab: Vocabulary) -> SynonymLexicon:
    """Read ``headword<TAB>syn1,syn2,...`` lines, keeping only in-vocabulary words.

    Duplicate headwords are merged in file order; headwords left without any
    substitute are dropped.
    """
    merged: dict[int, list[int]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(path, line_no, "expected 'headword<TAB>syn1,syn2,...'")
            head, rest = line.split("\t", 1)
            head = head.strip().lower()
            if not head:
                raise ParseError(path, line_no, "empty headword")
            if head not in vocab:
                continue
            head_id = vocab.token_to_id[head]
            entry = merged.setdefault(head_id, [])
            for syn in rest.split(","):
                syn = syn.strip().lower()
                if not syn or syn not in vocab or syn == head:
                    continue
                sid = vocab.token_to_id[syn]
                if sid not in entry:
                    entry.append(sid)
    lexicon = SynonymLexicon()
    for head_id, syns in merged.items():
        if syns:
            lexicon[head_id] = syns
    return lexicon


def synonym_augment(example, lexicon, replace_prob, rng):
    """Replace each listed word with probability ``replace_prob`` by a uniform pick of its synonyms."""
    if not 0 <= replace_prob <= 1:
        raise ValueError(f"replace_prob must be in [0, 1], got {replace_prob}")
    tokens = list(_as_tokens(example))
    chosen = rng.random(len(tokens)) < replace_prob
    for i in np.flatnonzero(chosen):
        syns = lexicon.get(tokens[i])
        if syns:
            tokens[i] = syns[int(rng.integers(len(syns)))]
    return tuple(tokens)


def augment_examples(examples, method, rng, lm=None, lexicon=None, policy=None):
    """Apply ``method`` ("none", "synonym", "context", "context+label") to labeled examples.

    Returns new :class:`LabeledExample` objects with labels unchanged.
    """
    examples = list(examples)
    if method == "none":
        return examples
    if policy is None:
        raise ValueError(f"augmentation {method!r} needs a policy")
    if method == "synonym":
        if lexicon is None:
            raise ValueError("synonym augmentation needs a lexicon")
        return [LabeledExample(synonym_augment(ex, lexicon, policy.replace_prob, rng), ex.label) for ex in examples]
    if method in ("context", "context+label"):
        if lm is None:
            raise ValueError("contextual augmentation needs a language model")
        pol = AugmentPolicy(policy.tau, policy.replace_prob, use_label=method == "context+label")
        seqs = contextual_augment_batch(examples, lm, pol, rng)
        return [LabeledExample(s, ex.label) for s, ex in zip(seqs, examples)]
    raise ValueError(f"unknown augmentation method {method!r}")
