"""A small synthetic polarity task: fixed sentence frames with one sentiment slot.

Every sentence is ``the NOUN FRAME SLOT .`` where SLOT comes from one of two
disjoint lexicons, and the label is the lexicon's polarity. Pretraining text
draws the slot from both lexicons without labels, so only a label-conditional
model can tell which half of the slot vocabulary fits a given class.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

POSITIVE = ("good", "great", "funny", "brilliant", "charming", "superb", "moving", "clever", "delightful", "fresh")
NEGATIVE = ("bad", "dull", "boring", "awful", "clumsy", "weak", "tedious", "bland", "messy", "stale")
NOUNS = (
    "movie", "film", "plot", "acting", "story", "script",
    "cast", "ending", "music", "direction", "dialogue", "soundtrack",
)
FRAMES = (("was",), ("is", "really"), ("seemed", "quite"), ("felt", "so"), ("turned", "out", "to", "be"))
LABEL_NAMES = ("neg", "pos")
# partial coverage on purpose: a synonym lexicon rarely lists every word
SYNONYMS = {
    "good": ("great", "fine"), "great": ("good",), "funny": ("amusing",), "clever": ("smart",),
    "bad": ("awful", "poor"), "awful": ("bad",), "dull": ("boring",), "boring": ("dull",),
    "movie": ("film",), "film": ("movie",), "story": ("plot",), "plot": ("story",),
}


@dataclass(frozen=True)
class Template:
    noun: str
    frame: tuple

    @property
    def slot(self):
        return 2 + len(self.frame)

    def render(self, word):
        return ["the", self.noun, *self.frame, word, "."]

    def pattern(self):
        return " ".join(self.render("_"))


def all_templates():
    return [Template(n, f) for n in NOUNS for f in FRAMES]


def split_templates(seed=0, heldout=12):
    """Seeded split of the templates into (seen, held-out)."""
    temps = all_templates()
    order = np.random.default_rng([seed, 7]).permutation(len(temps))
    held = [temps[i] for i in order[:heldout]]
    seen = [temps[i] for i in order[heldout:]]
    return seen, held


def sample_labeled(templates, n, rng):
    """``n`` (tokens, label_name) pairs with balanced labels drawn from ``templates``."""
    out = []
    for i in range(n):
        label = i % 2
        lex = POSITIVE if label == 1 else NEGATIVE
        t = templates[int(rng.integers(len(templates)))]
        out.append((t.render(lex[int(rng.integers(len(lex)))]), LABEL_NAMES[label]))
    order = rng.permutation(n)
    return [out[i] for i in order]


def write_polarity_task(out_dir, seed=0, n_pretrain=2000, n_train=600, n_dev=200, n_test=600, heldout=12):
    """Write pretrain.txt, train/dev/test/finetune TSVs, synonyms.tsv and heldout.txt to ``out_dir``.

    ``finetune.tsv`` uses only seen templates; ``heldout.txt`` lists the
    remaining patterns with ``_`` at the slot. Returns a dict of paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 11])
    seen, held = split_templates(seed, heldout)
    temps = seen + held
    slot_words = POSITIVE + NEGATIVE
    pretrain = []
    for _ in range(n_pretrain):
        t = temps[int(rng.integers(len(temps)))]
        pretrain.append(" ".join(t.render(slot_words[int(rng.integers(len(slot_words)))])))
    paths = {"pretrain": out / "pretrain.txt"}
    paths["pretrain"].write_text("\n".join(pretrain) + "\n", encoding="utf-8")
    for name, pool, n in (
        ("train", temps, n_train),
        ("dev", temps, n_dev),
        ("test", temps, n_test),
        ("finetune", seen, n_train),
    ):
        rows = sample_labeled(pool, n, rng)
        paths[name] = out / f"{name}.tsv"
        paths[name].write_text("".join(f"{lab}\t{' '.join(toks)}\n" for toks, lab in rows), encoding="utf-8")
    paths["synonyms"] = out / "synonyms.tsv"
    paths["synonyms"].write_text("".join(f"{h}\t{','.join(s)}\n" for h, s in SYNONYMS.items()), encoding="utf-8")
    paths["heldout"] = out / "heldout.txt"
    paths["heldout"].write_text("".join(t.pattern() + "\n" for t in held), encoding="utf-8")
    return paths
