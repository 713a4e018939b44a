"""Contextual data augmentation with a label-conditional bidirectional cloze LM."""
__version__ = "0.1.0"
