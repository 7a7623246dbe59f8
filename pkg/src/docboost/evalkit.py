"""Evaluation metrics and the train/test split protocol."""

from __future__ import annotations

import enum
import logging
import random
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence, TypeVar

from .errors import DocboostError
from .preprocess import tokenize

log = logging.getLogger(__name__)

T = TypeVar("T")


class LengthMismatch(DocboostError):
    """Paired sequences of different lengths."""


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    variant: str

    def __post_init__(self):
        for value in (self.precision, self.recall, self.f1):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"rouge component out of range: {value}")


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap F1 over lowercased tokens."""
    variant = f"R{n}"
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    if not cand and not ref:
        return RougeScore(1.0, 1.0, 1.0, variant)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0, variant)
    overlap = sum((cand & ref).values())
    p = overlap / sum(cand.values())
    r = overlap / sum(ref.values())
    return RougeScore(p, r, _f1(p, r), variant)


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence F1 over lowercased tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand and not ref:
        return RougeScore(1.0, 1.0, 1.0, "RL")
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0, "RL")
    lcs = _lcs_len(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    return RougeScore(p, r, _f1(p, r), "RL")


def weighted_prf(predictions: Sequence[Hashable],
                 golds: Sequence[Hashable]) -> tuple[float, float, float]:
    """Per-class P/R/F1 averaged with gold-support weights."""
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise LengthMismatch("need at least one labeled pair")
    total = len(golds)
    gold_support = Counter(golds)
    pred_support = Counter(predictions)
    hits = Counter(g for p, g in zip(predictions, golds) if p == g)
    wp = wr = wf = 0.0
    for label, support in gold_support.items():
        weight = support / total
        p = hits[label] / pred_support[label] if pred_support[label] else 0.0
        r = hits[label] / support
        wp += weight * p
        wr += weight * r
        wf += weight * _f1(p, r)
    return wp, wr, wf


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement with pooled marginal chance estimate."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} labels")
    n = len(a)
    if n == 0:
        raise LengthMismatch("need at least one labeled pair")
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    pooled = Counter(a) + Counter(b)
    expected = sum((count / (2 * n)) ** 2 for count in pooled.values())
    if expected >= 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


class SplitMode(enum.Enum):
    CROSS_API = "CrossApi"
    WITHIN_API = "WithinApi"


@dataclass(frozen=True)
class SplitSpec:
    mode: SplitMode
    seed: int = 42
    train_fraction: float = 0.75


def make_split(items: Sequence[T], spec: SplitSpec) -> tuple[list[T], list[T]]:
    """Seeded 75/25 shuffle split.

    In cross-API mode the caller passes APIs (their sentences follow the
    assignment downstream); in within-API mode it passes sentences directly.
    """
    if not items:
        raise ValueError("cannot split an empty collection")
    shuffled = list(items)
    random.Random(spec.seed).shuffle(shuffled)
    cut = int(len(shuffled) * spec.train_fraction)
    train, test = shuffled[:cut], shuffled[cut:]
    if not train:
        log.warning("split left zero train items (n=%d, mode=%s)",
                    len(items), spec.mode.value)
    return train, test
