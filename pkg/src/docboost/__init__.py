"""Augment API reference docs with summaries mined from posts and captions."""

__version__ = "0.1.0"
