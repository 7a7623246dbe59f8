"""Turn raw source bodies into clean, filtered sentences.

Covers HTML sanitizing with structural placeholders, timed-text parsing,
rule-based sentence splitting, and the BM25 relevance filter that keeps
caption sentences near the API under discussion.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Iterable, Mapping, Sequence

from .errors import EmptyCorpus, MalformedCaption
from .models import Address, ApiRecord, Sentence, SourceDoc, SourceKind

CODE_SNIPPET = "[code-snippet]"
TABLE = "[table]"
FIGURE = "[figure]"
EXTERNAL_LINK = "[external-link]"

_TOKEN_RE = re.compile(r"[a-z0-9_.]+")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+$", re.IGNORECASE)


def tokenize(text: str) -> list[str]:
    """Lowercase tokens; dots survive inside identifiers, never at the edges."""
    out = []
    for raw in _TOKEN_RE.findall(text.lower()):
        tok = raw.strip(".")
        if tok:
            out.append(tok)
    return out


# ---------------------------------------------------------------------------
# HTML sanitizing

_BLOCK_TAGS = frozenset({
    "p", "div", "br", "li", "ul", "ol", "tr", "blockquote", "hr",
    "h1", "h2", "h3", "h4", "h5", "h6",
})


class _Sanitizer(HTMLParser):
    """Strips markup, replacing structural elements with placeholders.

    Lenient by design: unbalanced tags never raise, they just close or
    open whatever state is active.
    """

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._anchor_depth = 0
        self._anchor_parts: list[str] = []
        self._skip_tag: str | None = None
        self._skip_depth = 0

    def _emit(self, text: str):
        if self._anchor_depth > 0:
            self._anchor_parts.append(text)
        else:
            self.parts.append(text)

    def handle_starttag(self, tag, attrs):
        if self._skip_tag is not None:
            if tag == self._skip_tag:
                self._skip_depth += 1
            return
        if tag == "pre":
            self._emit(f" {CODE_SNIPPET} ")
            self._skip_tag, self._skip_depth = "pre", 1
        elif tag == "table":
            self._emit(f" {TABLE} ")
            self._skip_tag, self._skip_depth = "table", 1
        elif tag == "img":
            self._emit(f" {FIGURE} ")
        elif tag == "a":
            self._anchor_depth += 1
        elif tag in _BLOCK_TAGS:
            self._emit(" ")

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag not in ("img", "br", "hr"):
            self.handle_endtag(tag)

    def _close_anchor(self):
        text = "".join(self._anchor_parts).strip()
        self._anchor_parts = []
        if text and not _URL_RE.match(text):
            self.parts.append(f" {text} {EXTERNAL_LINK} ")
        else:
            self.parts.append(f" {EXTERNAL_LINK} ")

    def handle_endtag(self, tag):
        if self._skip_tag is not None:
            if tag == self._skip_tag:
                self._skip_depth -= 1
                if self._skip_depth <= 0:
                    self._skip_tag = None
            return
        if tag == "a":
            if self._anchor_depth == 0:
                return
            self._anchor_depth -= 1
            if self._anchor_depth == 0:
                self._close_anchor()
        elif tag in _BLOCK_TAGS:
            self._emit(" ")

    def handle_data(self, data):
        if self._skip_tag is None:
            self._emit(data)

    def result(self) -> str:
        if self._anchor_depth > 0:
            self._anchor_depth = 0
            self._close_anchor()
        return re.sub(r"\s+", " ", "".join(self.parts)).strip()


def sanitize_body(raw: str) -> str:
    """Flatten post HTML to plain text with structural placeholders.

    Code blocks, tables and images become [code-snippet], [table] and
    [figure]; hyperlinks become [external-link], keeping anchor text when
    it is prose rather than a bare URL. Inline code stays verbatim.
    """
    parser = _Sanitizer()
    parser.feed(raw)
    parser.close()
    return parser.result()


# ---------------------------------------------------------------------------
# Timed-text parsing

_TIMESTAMP_RE = re.compile(
    r"(?:(\d+):)?(\d{1,2}):(\d{2})[.,](\d{1,3})")
_CUE_MARKUP_RE = re.compile(r"<[^>]*>")


def _parse_timestamp(text: str) -> float | None:
    m = _TIMESTAMP_RE.search(text)
    if not m:
        return None
    hours = int(m.group(1) or 0)
    return hours * 3600 + int(m.group(2)) * 60 + int(m.group(3)) + int(m.group(4).ljust(3, "0")) / 1000.0


def _merge_lines(lines: Iterable[str]) -> str:
    """Join caption lines, absorbing the overlap rolling captions repeat.

    Consecutive duplicate lines collapse entirely; partial repeats are
    detected as the longest token suffix of the text so far that prefixes
    the next line.
    """
    words: list[str] = []
    for line in lines:
        new = line.split()
        if not new:
            continue
        limit = min(len(words), len(new))
        overlap = 0
        for m in range(limit, 0, -1):
            if words[-m:] == new[:m]:
                overlap = m
                break
        words.extend(new[overlap:])
    return " ".join(words)


def parse_caption(timed_text: str) -> str:
    """Flatten a WebVTT or SRT payload into one clean text stream.

    Raises MalformedCaption when no cue can be parsed at all.
    """
    text = timed_text.lstrip("﻿")
    cues: list[tuple[float, int, list[str]]] = []
    block: list[str] = []

    def flush(block: list[str]):
        if not block:
            return
        head = block[0].strip().upper()
        if head.startswith(("WEBVTT", "NOTE", "STYLE", "REGION")):
            return
        for i, line in enumerate(block):
            if "-->" in line:
                start = _parse_timestamp(line.split("-->")[0])
                if start is None:
                    return
                body = [_CUE_MARKUP_RE.sub("", l).strip() for l in block[i + 1:]]
                cues.append((start, len(cues), [l for l in body if l]))
                return

    for line in text.splitlines():
        if line.strip():
            block.append(line)
        else:
            flush(block)
            block = []
    flush(block)

    if not cues:
        raise MalformedCaption("no parsable cue in timed text")

    cues.sort(key=lambda c: (c[0], c[1]))
    lines: list[str] = []
    for _, _, body in cues:
        lines.extend(body)
    return re.sub(r"\s+", " ", _merge_lines(lines)).strip()


# ---------------------------------------------------------------------------
# Sentence splitting

# Dotted tokens that end sentences far less often than they end abbreviations.
ABBREVIATIONS = frozenset({"e.g.", "i.e.", "etc.", "vs.", "cf.", "al.", "resp."})

_TERMINATOR_RE = re.compile(r"[.!?]+")
_CONTINUATION_RE = re.compile(r"\s+[A-Z\[]")
_WORD_BACK_RE = re.compile(r"[A-Za-z][A-Za-z.]*$")


def split_text(text: str) -> list[str]:
    """Split prose into sentences by terminator-then-capital boundaries.

    A period only splits when the following text starts with whitespace and
    a capital letter or a placeholder bracket, and the word it ends is not a
    known abbreviation. Dots inside identifiers never split because nothing
    follows them but more identifier. ! and ? split regardless of the
    abbreviation list.
    """
    breaks = []
    for m in _TERMINATOR_RE.finditer(text):
        if not _CONTINUATION_RE.match(text, m.end()):
            continue
        if m.group().endswith("."):
            back = _WORD_BACK_RE.search(text, 0, m.end())
            if back and back.group().lower() in ABBREVIATIONS:
                continue
        breaks.append(m.end())
    pieces = []
    start = 0
    for b in breaks + [len(text)]:
        piece = text[start:b].strip()
        if piece:
            pieces.append(piece)
        start = b
    return pieces


def split_sentences(text: str, source: SourceDoc) -> list[Sentence]:
    """Split cleaned text into addressed sentences for one source doc."""
    return [
        Sentence(text=piece,
                 address=Address(source.source_id, i),
                 origin_kind=source.source_kind)
        for i, piece in enumerate(split_text(text))
    ]


# ---------------------------------------------------------------------------
# BM25 and the caption relevance filter

@dataclass(frozen=True)
class CorpusStats:
    """Document-frequency statistics over one scoring scope."""

    doc_count: int
    avg_doc_len: float
    term_doc_freq: Mapping[str, int]

    @classmethod
    def from_documents(cls, docs: Iterable[Sequence[str]]) -> "CorpusStats":
        doc_freq: Counter[str] = Counter()
        count = 0
        total_len = 0
        for tokens in docs:
            count += 1
            total_len += len(tokens)
            doc_freq.update(set(tokens))
        return cls(doc_count=count,
                   avg_doc_len=total_len / count if count else 0.0,
                   term_doc_freq=dict(doc_freq))


def bm25_score(query_terms: Sequence[str], doc_tokens: Sequence[str],
               stats: CorpusStats, k1: float = 1.2, b: float = 0.75) -> float:
    """Okapi BM25 with the +1 inside the idf log, so idf stays positive."""
    if stats.doc_count == 0:
        raise EmptyCorpus("BM25 needs at least one document of statistics")
    freqs = Counter(doc_tokens)
    dlen = len(doc_tokens)
    n = stats.doc_count
    score = 0.0
    for term in query_terms:
        hits = freqs.get(term, 0)
        if hits == 0:
            continue
        n_q = stats.term_doc_freq.get(term, 0)
        idf = math.log((n - n_q + 0.5) / (n_q + 0.5) + 1.0)
        norm = hits + k1 * (1.0 - b + b * dlen / stats.avg_doc_len)
        score += idf * hits * (k1 + 1.0) / norm
    return score


_PARAM_LINE_RE = re.compile(r"^\s*[-*`\s]*([A-Za-z_][A-Za-z0-9_]*)\s*`?\s*:")


def parameter_names(api: ApiRecord) -> list[str]:
    """Pull `name:`-prefixed parameter names out of the Parameters section."""
    from .models import SectionKind

    text = api.doc_sections.get(SectionKind.PARAMETERS, "")
    names = []
    for line in text.splitlines():
        m = _PARAM_LINE_RE.match(line)
        if m:
            names.append(m.group(1))
    return names


def build_query_terms(api: ApiRecord, extra_params: Sequence[str] = ()) -> list[str]:
    """API-name tokens, parameter names, and the I/O anchors, deduplicated."""
    terms: list[str] = []
    seen: set[str] = set()
    for chunk in ([api.api_name], parameter_names(api), list(extra_params),
                  ["input", "output"]):
        for word in chunk:
            for tok in tokenize(word):
                if tok not in seen:
                    seen.add(tok)
                    terms.append(tok)
    return terms


def filter_caption_sentences(sentences: Sequence[Sentence], api: ApiRecord,
                             *, k1: float = 1.2, b: float = 0.75,
                             extra_params: Sequence[str] = ()) -> list[Sentence]:
    """Drop caption sentences with no BM25 affinity to the API query.

    Post sentences pass through untouched. Caption sentences are scored
    against per-video statistics; a sentence survives when its own score is
    positive or an ordinal neighbor's in the same video is. Output keeps the
    input order.
    """
    query = build_query_terms(api, extra_params)
    keep = [s.origin_kind is not SourceKind.VIDEO_CAPTION for s in sentences]

    by_video: dict[str, list[int]] = {}
    for idx, sent in enumerate(sentences):
        if sent.origin_kind is SourceKind.VIDEO_CAPTION:
            by_video.setdefault(sent.address.source_id, []).append(idx)

    for indices in by_video.values():
        docs = [tokenize(sentences[i].text) for i in indices]
        stats = CorpusStats.from_documents(docs)
        positive = [bm25_score(query, tokens, stats, k1=k1, b=b) > 0.0
                    for tokens in docs]
        for pos, flag in enumerate(positive):
            if not flag:
                continue
            for neighbor in (pos - 1, pos, pos + 1):
                if 0 <= neighbor < len(indices):
                    keep[indices[neighbor]] = True

    return [s for s, k in zip(sentences, keep) if k]
