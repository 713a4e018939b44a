"""Tokenization, vocabularies, labeled datasets and train/validation splits."""
from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")


class ParseError(ValueError):
    """A data file line does not follow the expected format."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace; punctuation stays attached."""
    return text.lower().split()


class Vocabulary:
    """Bijective token <-> id map; ids 0-3 are ``<pad> <unk> <bos> <eos>``."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            tokens = list(SPECIAL_TOKENS) + [t for t in tokens if t not in SPECIAL_TOKENS]
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.id_to_token = tokens
        self.token_to_id = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.id_to_token)

    @property
    def size(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def __repr__(self):
        return f"Vocabulary(size={self.size})"

    def id(self, token):
        return self.token_to_id.get(token, UNK)

    def token(self, idx):
        return self.id_to_token[idx]

    def digest(self) -> str:
        """SHA-256 over the ordered token list; used to tie checkpoints to a vocabulary."""
        h = hashlib.sha256()
        for tok in self.id_to_token:
            h.update(tok.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.id_to_token), encoding="utf-8")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != SPECIAL_TOKENS:
            raise ParseError(path, 1, f"first four lines must be {' '.join(SPECIAL_TOKENS)}")
        return cls(lines)


def build_vocab(corpus, min_count=1, max_size=50_000) -> Vocabulary:
    """Specials plus the most frequent tokens (count >= min_count), ties by token order."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if max_size < 4:
        raise ValueError("max_size must be >= 4")
    counts = Counter(tok for sent in corpus for tok in sent)
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    ranked = sorted((tok for tok, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIAL_TOKENS) + ranked[: max_size - 4])


def encode(tokens, vocab: Vocabulary) -> list[int]:
    return [vocab.token_to_id.get(t, UNK) for t in tokens]


def decode(ids, vocab: Vocabulary) -> list[str]:
    return [vocab.id_to_token[i] for i in ids]


@dataclass(frozen=True)
class LabeledExample:
    tokens: tuple
    label: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) == 0:
            raise ValueError("a labeled example needs at least one token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    num_classes: int
    label_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if self.num_classes < 2:
            raise ValueError("a dataset needs at least two classes")
        if len(self.label_names) != self.num_classes:
            raise ValueError("label_names length must equal num_classes")


def load_labeled_tsv(path, vocab=None, label_names=None):
    """Read ``label<TAB>text`` lines.

    Labels get contiguous ids in first-appearance order unless ``label_names``
    fixes the mapping (used so dev/test files share the train file's ids).
    Tokens are encoded when ``vocab`` is given and kept as strings otherwise.
    """
    path = Path(path)
    label_ids = {name: i for i, name in enumerate(label_names or ())}
    fixed = label_names is not None
    examples = []
    with path.open(encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(path, line_no, "expected 'label<TAB>text'")
            label, text = line.split("\t", 1)
            tokens = tokenize(text)
            if not tokens:
                raise ParseError(path, line_no, "empty sentence")
            if label not in label_ids:
                if fixed:
                    raise ParseError(path, line_no, f"unknown label {label!r}")
                label_ids[label] = len(label_ids)
            seq = encode(tokens, vocab) if vocab is not None else tokens
            examples.append(LabeledExample(seq, label_ids[label]))
    if not examples:
        raise ParseError(path, 0, "file contains no examples")
    names = sorted(label_ids, key=label_ids.get)
    if len(names) < 2:
        raise ParseError(path, 0, "need at least two distinct labels")
    return examples, DatasetMeta(path.stem, len(names), names)


def load_plain_corpus(path, vocab=None):
    """One sentence per line; blank lines skipped."""
    sentences = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            tokens = tokenize(line)
            if tokens:
                sentences.append(encode(tokens, vocab) if vocab is not None else tokens)
    return sentences


def write_labeled_tsv(path, examples, vocab: Vocabulary, meta: DatasetMeta):
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(f"{meta.label_names[ex.label]}\t{' '.join(decode(ex.tokens, vocab))}\n")


def split_train_valid(examples, fraction=0.1, seed=0):
    """Seeded shuffle, then the last ceil(fraction * N) examples become validation."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    examples = list(examples)
    if not examples:
        raise ValueError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(examples))
    # tolerance keeps e.g. 0.1 * 300 from rounding up to 31
    n_valid = math.ceil(fraction * len(examples) - 1e-9)
    shuffled = [examples[i] for i in order]
    cut = len(shuffled) - n_valid
    return shuffled[:cut], shuffled[cut:]
