"""Keyphrase generation with a cross-document attention memory and a pointer-generator copy head."""

__version__ = "0.1.0"
