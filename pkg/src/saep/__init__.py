"""Self-attention encoding and pooling for speaker verification."""

__version__ = "0.1.0"
