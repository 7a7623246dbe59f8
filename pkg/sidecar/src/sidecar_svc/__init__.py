"""NDJSON inference sidecar: section logits, context probabilities, embeddings."""

__version__ = "0.1.0"
