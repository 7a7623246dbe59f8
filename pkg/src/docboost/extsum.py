"""Extractive update summarization over a sentence similarity graph.

Sentences become graph nodes weighted by embedding cosine; ranking runs a
damped random walk whose restart mass is biased *away* from content the
original documentation already covers. Plain TextRank and LexRank variants
share the same recurrence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyCorpus
from .models import ExtractiveSummary, Sentence
from .preprocess import tokenize


class EmbeddingProvider(Protocol):
    name: str
    deterministic: bool
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class TfidfEmbedder:
    """Bag-of-terms tf·idf vectors over a small fitted corpus, L2-normalized."""

    deterministic = True

    def __init__(self, texts: Sequence[str]):
        if not texts:
            raise EmptyCorpus("tf-idf embedder needs at least one fitting text")
        docs = [tokenize(t) for t in texts]
        vocab = sorted({tok for doc in docs for tok in doc})
        self._index = {tok: i for i, tok in enumerate(vocab)}
        n = len(docs)
        df = Counter(tok for doc in docs for tok in set(doc))
        self._idf = np.array(
            [math.log(n / (1 + df[tok])) + 1.0 for tok in vocab], dtype=float)
        self.dim = len(vocab)
        self.name = "tfidf"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=float)
        for tok, count in Counter(tokenize(text)).items():
            i = self._index.get(tok)
            if i is not None:
                vec[i] = count * self._idf[i]
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    if u.shape != v.shape:
        raise DimensionMismatch(f"cosine over dims {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class SentenceGraph:
    """Symmetric similarity graph plus the per-node restart penalty."""

    nodes: list[tuple[Sentence, np.ndarray]]
    weights: np.ndarray
    restart: np.ndarray

    def __post_init__(self):
        n = len(self.nodes)
        if self.weights.shape != (n, n) or self.restart.shape != (n,):
            raise DimensionMismatch("graph arrays do not match node count")


@dataclass
class RankResult:
    scores: np.ndarray
    iterations: int
    converged: bool


def build_graph(sentences: Sequence[Sentence], provider: EmbeddingProvider,
                api_doc_text: str) -> SentenceGraph:
    """Embed sentences and wire up similarity edges plus restart penalties.

    Edge weight is cosine clamped at zero; the restart entry for a node is
    1 - cosine(node, doc), so nodes echoing the existing documentation are
    restarted into rarely. An empty doc text leaves every restart at 1.
    """
    if not sentences:
        raise EmptyCorpus("cannot build a graph over zero sentences")
    vectors = [np.asarray(provider.embed(s.text), dtype=float) for s in sentences]
    dims = {v.shape for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"provider {provider.name} changed dim mid-run: {dims}")

    n = len(sentences)
    weights = np.zeros((n, n), dtype=float)
    for i in range(n):
        for j in range(i + 1, n):
            w = max(0.0, cosine(vectors[i], vectors[j]))
            weights[i, j] = weights[j, i] = w

    if api_doc_text.strip():
        doc_vec = np.asarray(provider.embed(api_doc_text), dtype=float)
        restart = np.array([1.0 - cosine(v, doc_vec) for v in vectors], dtype=float)
    else:
        restart = np.ones(n, dtype=float)

    return SentenceGraph(nodes=list(zip(sentences, vectors)),
                         weights=weights, restart=restart)


def _walk(weights: np.ndarray, restart: np.ndarray, phi: float, tol: float,
          max_iter: int, *, normalize_each_iter: bool = False,
          literal_out_degree: bool = False) -> RankResult:
    """Damped power iteration shared by every ranking variant.

    Default transition splits node j's score by j's own outgoing weight
    (mass-conserving). The literal mode instead divides each node's incoming
    neighbor sum by its *own* positive out-degree, matching the written
    recurrence at the price of mass conservation.
    """
    n = len(restart)
    if literal_out_degree:
        adjacency = (weights > 0).astype(float)
        out_deg = adjacency.sum(axis=1)
        coef = np.divide(1.0, out_deg, out=np.zeros(n), where=out_deg > 0)

        def step(c: np.ndarray) -> np.ndarray:
            return (1.0 - phi) * restart + phi * coef * (adjacency.T @ c)
    else:
        row_sums = weights.sum(axis=1)
        transition = np.where(row_sums[:, None] > 0,
                              weights / np.where(row_sums[:, None] > 0,
                                                 row_sums[:, None], 1.0),
                              1.0 / n)

        def step(c: np.ndarray) -> np.ndarray:
            return (1.0 - phi) * restart + phi * (transition.T @ c)

    scores = np.full(n, 1.0 / n)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        updated = step(scores)
        if normalize_each_iter:
            total = updated.sum()
            if total > 0:
                updated = updated / total
        delta = float(np.abs(updated - scores).sum())
        scores = updated
        if delta < tol:
            converged = True
            break

    total = scores.sum()
    scores = scores / total if total > 0 else np.full(n, 1.0 / n)
    return RankResult(scores=scores, iterations=iterations, converged=converged)


def rank_extup(graph: SentenceGraph, phi: float = 0.85, tol: float = 1e-6,
               max_iter: int = 100, *, normalize_each_iter: bool = False,
               literal_out_degree: bool = False) -> RankResult:
    """Rank with the documentation-penalty restart vector."""
    return _walk(graph.weights, graph.restart, phi, tol, max_iter,
                 normalize_each_iter=normalize_each_iter,
                 literal_out_degree=literal_out_degree)


def rank_textrank(graph: SentenceGraph, phi: float = 0.85, tol: float = 1e-6,
                  max_iter: int = 100, *, normalize_each_iter: bool = False,
                  literal_out_degree: bool = False) -> RankResult:
    """Same recurrence with every restart entry pinned to 1."""
    ones = np.ones(len(graph.restart))
    return _walk(graph.weights, ones, phi, tol, max_iter,
                 normalize_each_iter=normalize_each_iter,
                 literal_out_degree=literal_out_degree)


def rank_lexrank(sentences: Sequence[Sentence], phi: float = 0.85,
                 tol: float = 1e-6, max_iter: int = 100,
                 sim_threshold: float = 0.1) -> RankResult:
    """idf-weighted cosine graph with sub-threshold edges dropped."""
    if not sentences:
        raise EmptyCorpus("cannot rank zero sentences")
    embedder = TfidfEmbedder([s.text for s in sentences])
    vectors = [embedder.embed(s.text) for s in sentences]
    n = len(sentences)
    weights = np.zeros((n, n), dtype=float)
    for i in range(n):
        for j in range(i + 1, n):
            w = max(0.0, cosine(vectors[i], vectors[j]))
            if w >= sim_threshold:
                weights[i, j] = weights[j, i] = w
    return _walk(weights, np.ones(n), phi, tol, max_iter)


def select_topk(result: RankResult, sentences: Sequence[Sentence],
                k: int) -> ExtractiveSummary:
    """Pick the k best-scored sentences, presented in document order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    order = sorted(range(len(sentences)), key=lambda i: (-result.scores[i], i))
    chosen = sorted(order[:k])
    return ExtractiveSummary(sentences=[sentences[i] for i in chosen],
                             scores=[float(result.scores[i]) for i in chosen])


def dump_graph(graph: SentenceGraph) -> dict:
    """JSON-ready debugging view of one section's graph."""
    return {
        "nodes": [{"address": {"source_id": s.address.source_id,
                               "ordinal": s.address.ordinal},
                   "text": s.text}
                  for s, _ in graph.nodes],
        "weights": [[float(w) for w in row] for row in graph.weights],
        "restart": [float(r) for r in graph.restart],
    }
