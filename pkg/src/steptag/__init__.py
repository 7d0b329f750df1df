"""Step-tagging toolkit: reasoning-step segmentation, tagging, and
frequency-constraint early stopping for LLM inference streams."""

__version__ = "0.1.0"
