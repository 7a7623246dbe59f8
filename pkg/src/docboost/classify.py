"""Context-aware sentence classification into documentation sections.

A pluggable Scorer produces raw 4-class logits per sentence and a
context-dependence probability per adjacent pair. Sentences flagged as
context-dependent get their logits re-scored together with each flagged
neighbor and blended; the final label is the argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from .errors import SchemaError
from .models import ApiRecord, Sentence, SectionKind
from .preprocess import tokenize

SECTION_ORDER = tuple(SectionKind)


@dataclass(frozen=True)
class SectionLogits:
    """Raw scores indexed by SectionKind declaration order."""

    values: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.values) != 4:
            raise SchemaError(f"expected 4 logits, got {len(self.values)}")
        for v in self.values:
            if not math.isfinite(v):
                raise SchemaError(f"non-finite logit {v}")

    def argmax(self) -> SectionKind:
        best = max(range(4), key=lambda i: (self.values[i], -i))
        return SECTION_ORDER[best]

    def __getitem__(self, kind: SectionKind) -> float:
        return self.values[SECTION_ORDER.index(kind)]


@dataclass(frozen=True)
class ContextFlags:
    preceding: bool = False
    following: bool = False
    c_preceding: float = 0.0
    c_following: float = 0.0

    @property
    def any(self) -> bool:
        return self.preceding or self.following


class Scorer(Protocol):
    name: str
    deterministic: bool

    def score_section(self, sentence_text: str, api: ApiRecord) -> SectionLogits: ...

    def score_context(self, left_text: str, right_text: str) -> float: ...


DEFAULT_LEXICONS: dict[SectionKind, tuple[str, ...]] = {
    SectionKind.FUNCTIONALITY: (
        "applies", "computes", "performs", "behavior", "returns the result"),
    SectionKind.PARAMETERS: (
        "argument", "parameter", "input", "output", "default", "range", "dtype"),
    SectionKind.NOTES: (
        "performance", "deprecated", "warning", "platform", "version", "instead"),
}


def _count_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> int:
    span = len(phrase)
    if span == 0 or span > len(tokens):
        return 0
    return sum(1 for i in range(len(tokens) - span + 1)
               if list(tokens[i:i + span]) == list(phrase))


def mentions_api(tokens: Sequence[str], api: ApiRecord) -> bool:
    """True when the full dotted name, or its final segment, occurs."""
    full = tokenize(api.api_name)
    if full and _count_phrase(tokens, full) > 0:
        return True
    tail = full[-1].rsplit(".", 1)[-1] if full else ""
    return bool(tail) and tail in tokens


class LexicalSectionScorer:
    """Deterministic test-friendly classifier: logit = lexicon hit count."""

    name = "lexical-fallback"
    deterministic = True

    def __init__(self, lexicons: Mapping[SectionKind, Sequence[str]] | None = None):
        source = lexicons if lexicons is not None else DEFAULT_LEXICONS
        self._lexicons = {
            kind: tuple(tuple(tokenize(entry)) for entry in source.get(kind, ()))
            for kind in (SectionKind.FUNCTIONALITY, SectionKind.PARAMETERS,
                         SectionKind.NOTES)
        }

    def score_section(self, sentence_text: str, api: ApiRecord) -> SectionLogits:
        tokens = tokenize(sentence_text)
        counts = {
            kind: float(sum(_count_phrase(tokens, phrase) for phrase in phrases))
            for kind, phrases in self._lexicons.items()
        }
        no_hits = all(c == 0.0 for c in counts.values())
        irrelevant = 1.0 if no_hits and not mentions_api(tokens, api) else 0.0
        return SectionLogits((counts[SectionKind.FUNCTIONALITY],
                              counts[SectionKind.PARAMETERS],
                              counts[SectionKind.NOTES],
                              irrelevant))

    def score_context(self, left_text: str, right_text: str) -> float:
        raise NotImplementedError("pair with a context scorer via CompositeScorer")


class JaccardContextScorer:
    """Context dependence proxy: token-set Jaccard of the two sentences."""

    name = "jaccard-fallback"
    deterministic = True

    def score_context(self, left_text: str, right_text: str) -> float:
        left = set(tokenize(left_text))
        right = set(tokenize(right_text))
        union = left | right
        if not union:
            return 0.0
        return len(left & right) / len(union)

    def score_section(self, sentence_text: str, api: ApiRecord) -> SectionLogits:
        raise NotImplementedError("pair with a section scorer via CompositeScorer")


@dataclass
class CompositeScorer:
    """Glues a section scorer and a context scorer into one Scorer."""

    section_scorer: Scorer
    context_scorer: Scorer
    name: str = field(init=False)
    deterministic: bool = field(init=False)

    def __post_init__(self):
        self.name = f"{self.section_scorer.name}+{self.context_scorer.name}"
        self.deterministic = (self.section_scorer.deterministic
                              and self.context_scorer.deterministic)

    def score_section(self, sentence_text: str, api: ApiRecord) -> SectionLogits:
        return self.section_scorer.score_section(sentence_text, api)

    def score_context(self, left_text: str, right_text: str) -> float:
        return self.context_scorer.score_context(left_text, right_text)


def fallback_scorers() -> tuple[LexicalSectionScorer, JaccardContextScorer]:
    return LexicalSectionScorer(), JaccardContextScorer()


def fallback_scorer(lexicons: Mapping[SectionKind, Sequence[str]] | None = None) -> CompositeScorer:
    return CompositeScorer(LexicalSectionScorer(lexicons), JaccardContextScorer())


def score_section(scorer: Scorer, sentence: Sentence, api: ApiRecord) -> SectionLogits:
    return scorer.score_section(sentence.text, api)


def detect_context(scorer: Scorer, sentences: Sequence[Sentence],
                   threshold: float = 0.5) -> list[ContextFlags]:
    """Flag each sentence's neighbor dependences within one source."""
    sources = {s.address.source_id for s in sentences}
    if len(sources) > 1:
        raise ValueError(f"context detection crosses sources: {sorted(sources)}")
    n = len(sentences)
    pair_scores = [scorer.score_context(sentences[i].text, sentences[i + 1].text)
                   for i in range(n - 1)]
    flags = []
    for i in range(n):
        c_pre = pair_scores[i - 1] if i > 0 else 0.0
        c_fol = pair_scores[i] if i < n - 1 else 0.0
        pre = i > 0 and c_pre >= threshold
        fol = i < n - 1 and c_fol >= threshold
        flags.append(ContextFlags(preceding=pre, following=fol,
                                  c_preceding=c_pre if pre else 0.0,
                                  c_following=c_fol if fol else 0.0))
    return flags


def fuse_logits(l_origin: SectionLogits,
                contexts: Sequence[tuple[float, SectionLogits]]) -> SectionLogits:
    """Blend origin logits with context-aware logits, one term per neighbor."""
    if not contexts:
        raise ValueError("fusion needs at least one context term")
    fused = [0.0, 0.0, 0.0, 0.0]
    for c, l_context in contexts:
        for j in range(4):
            fused[j] += (1.0 - c) * l_origin.values[j] + c * l_context.values[j]
    k = len(contexts)
    return SectionLogits(tuple(v / k for v in fused))


@dataclass
class ClassifiedSentence:
    """Pipeline-facing record: sentence plus everything classify derived."""

    sentence: Sentence
    label: SectionKind
    logits: SectionLogits
    flags: ContextFlags
    origin_logits: SectionLogits


def classify_sentences(scorer: Scorer, sentences: Sequence[Sentence],
                       api: ApiRecord, *, threshold: float = 0.5,
                       concat_both: bool = False) -> list[ClassifiedSentence]:
    """Classify every sentence, fusing logits where context demands it.

    Sentences are regrouped by source internally; context never crosses a
    source boundary. Output order matches input order.
    """
    groups: dict[tuple[str, str], list[int]] = {}
    for idx, s in enumerate(sentences):
        key = (s.origin_kind.value, s.address.source_id)
        groups.setdefault(key, []).append(idx)

    results: list[ClassifiedSentence | None] = [None] * len(sentences)
    for indices in groups.values():
        group = [sentences[i] for i in indices]
        flags = detect_context(scorer, group, threshold)
        for pos, idx in enumerate(indices):
            sent = group[pos]
            l_origin = scorer.score_section(sent.text, api)
            flag = flags[pos]
            if flag.any:
                if concat_both:
                    parts = []
                    if flag.preceding:
                        parts.append(group[pos - 1].text)
                    parts.append(sent.text)
                    if flag.following:
                        parts.append(group[pos + 1].text)
                    l_joint = scorer.score_section(" ".join(parts), api)
                    contexts = [(c, l_joint) for c, used in
                                ((flag.c_preceding, flag.preceding),
                                 (flag.c_following, flag.following)) if used]
                else:
                    contexts = []
                    if flag.preceding:
                        contexts.append((flag.c_preceding, scorer.score_section(
                            group[pos - 1].text + " " + sent.text, api)))
                    if flag.following:
                        contexts.append((flag.c_following, scorer.score_section(
                            sent.text + " " + group[pos + 1].text, api)))
                fused = fuse_logits(l_origin, contexts)
            else:
                fused = l_origin
            results[idx] = ClassifiedSentence(sentence=sent, label=fused.argmax(),
                                              logits=fused, flags=flag,
                                              origin_logits=l_origin)
    return [r for r in results if r is not None]


def predict_sections(scorer: Scorer, sentences: Sequence[Sentence],
                     api: ApiRecord, *, threshold: float = 0.5,
                     concat_both: bool = False) -> list[tuple[SectionKind, SectionLogits]]:
    return [(r.label, r.logits) for r in
            classify_sentences(scorer, sentences, api,
                               threshold=threshold, concat_both=concat_both)]
