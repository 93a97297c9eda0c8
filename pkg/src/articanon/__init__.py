"""Synthetic 4D articulated-object benchmark: data generation, canonical-space
targets and losses, a small trainable segmenter, clustering and LSTQ metrics."""

__version__ = "0.1.0"
