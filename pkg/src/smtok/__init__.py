"""Cross-modal music token toolkit: vocabularies, tokenizers, dataset filters and metrics."""

__version__ = "0.1.0"
