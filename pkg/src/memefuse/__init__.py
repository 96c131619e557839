"""Parallel-channel multimodal sentiment classifier for memes."""

__version__ = "0.1.0"
