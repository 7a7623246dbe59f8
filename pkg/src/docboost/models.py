"""Core domain types passed between pipeline stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from .errors import SchemaError

# The three sections an augmented doc carries, in canonical order, plus the
# reject class. Declaration order doubles as the argmax tie-break order.
class SectionKind(enum.Enum):
    FUNCTIONALITY = "functionality"
    PARAMETERS = "parameters"
    NOTES = "notes"
    IRRELEVANT = "irrelevant"

    @classmethod
    def from_name(cls, name: str) -> "SectionKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise SchemaError(f"unknown section {name!r}; expected one of "
                              + ", ".join(k.value for k in cls)) from None


SUMMARY_SECTIONS = (SectionKind.FUNCTIONALITY, SectionKind.PARAMETERS, SectionKind.NOTES)


class SourceKind(enum.Enum):
    ANSWER_POST = "AnswerPost"
    VIDEO_CAPTION = "VideoCaption"

    @classmethod
    def from_name(cls, name: str) -> "SourceKind":
        try:
            return cls(name)
        except ValueError:
            raise SchemaError(f"unknown source_kind {name!r}; expected one of "
                              + ", ".join(k.value for k in cls)) from None


class Address(NamedTuple):
    """Stable pointer to one sentence: source document id plus 0-based ordinal."""

    source_id: str
    ordinal: int

    def tag(self) -> str:
        return f"{self.source_id}#{self.ordinal}"


@dataclass(frozen=True)
class ApiRecord:
    library_name: str
    api_name: str
    doc_sections: dict[SectionKind, str]

    def __post_init__(self):
        if not self.api_name:
            raise SchemaError("api_name must be non-empty")
        expected = set(SUMMARY_SECTIONS)
        if set(self.doc_sections) != expected:
            raise SchemaError("doc_sections must have exactly the keys "
                              + ", ".join(k.value for k in SUMMARY_SECTIONS))

    @classmethod
    def from_dict(cls, raw: dict[str, Any], *, path: str | None = None) -> "ApiRecord":
        try:
            sections = raw["doc_sections"]
        except KeyError:
            raise SchemaError("missing doc_sections", path=path) from None
        if not isinstance(sections, dict):
            raise SchemaError("doc_sections must be an object", path=path)
        parsed = {SectionKind.from_name(k): str(v) for k, v in sections.items()}
        try:
            return cls(library_name=str(raw.get("library_name", "")),
                       api_name=str(raw["api_name"]),
                       doc_sections=parsed)
        except KeyError as exc:
            raise SchemaError(f"missing {exc.args[0]}", path=path) from None
        except SchemaError as exc:
            raise SchemaError(str(exc), path=path) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "library_name": self.library_name,
            "api_name": self.api_name,
            "doc_sections": {k.value: v for k, v in self.doc_sections.items()},
        }


@dataclass(frozen=True)
class SourceDoc:
    source_kind: SourceKind
    source_id: str
    url: str
    score: int
    raw_body: str
    fetched_at: str

    def __post_init__(self):
        if not self.source_id:
            raise SchemaError("source_id must be non-empty")
        if self.source_kind is SourceKind.ANSWER_POST and self.score < 1:
            raise SchemaError(f"answer {self.source_id} has score {self.score}; "
                              "answers below one up vote are filtered at ingest")

    @classmethod
    def from_dict(cls, raw: dict[str, Any], *, path: str | None = None) -> "SourceDoc":
        for key in ("source_kind", "source_id", "raw_body"):
            if key not in raw:
                raise SchemaError(f"missing {key}", path=path, field=key)
        score = raw.get("score", 0)
        if not isinstance(score, int) or isinstance(score, bool):
            raise SchemaError(f"score must be an integer, got {score!r}",
                              path=path, field="score")
        try:
            return cls(source_kind=SourceKind.from_name(str(raw["source_kind"])),
                       source_id=str(raw["source_id"]),
                       url=str(raw.get("url", "")),
                       score=score,
                       raw_body=str(raw["raw_body"]),
                       fetched_at=str(raw.get("fetched_at", "")))
        except SchemaError as exc:
            raise SchemaError(str(exc), path=path) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "source_kind": self.source_kind.value,
            "source_id": self.source_id,
            "url": self.url,
            "score": self.score,
            "raw_body": self.raw_body,
            "fetched_at": self.fetched_at,
        }


@dataclass(frozen=True)
class Corpus:
    api: ApiRecord
    docs: tuple[SourceDoc, ...]

    def doc_by_id(self, source_id: str) -> SourceDoc | None:
        for doc in self.docs:
            if doc.source_id == source_id:
                return doc
        return None


@dataclass(frozen=True)
class Sentence:
    text: str
    address: Address
    origin_kind: SourceKind

    def __post_init__(self):
        if not self.text.strip():
            raise SchemaError(f"empty sentence at {self.address.tag()}")
        if self.address.ordinal < 0:
            raise SchemaError(f"negative ordinal at {self.address.tag()}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "source_id": self.address.source_id,
            "ordinal": self.address.ordinal,
            "origin_kind": self.origin_kind.value,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any], *, path: str | None = None) -> "Sentence":
        try:
            return cls(text=str(raw["text"]),
                       address=Address(str(raw["source_id"]), int(raw["ordinal"])),
                       origin_kind=SourceKind.from_name(str(raw["origin_kind"])))
        except KeyError as exc:
            raise SchemaError(f"missing {exc.args[0]}", path=path) from None


@dataclass
class ExtractiveSummary:
    """Top-ranked source sentences for one section, in document order."""

    sentences: list[Sentence]
    scores: list[float]
    section: SectionKind | None = None

    def __post_init__(self):
        if len(self.sentences) != len(self.scores):
            raise SchemaError("sentences and scores must align")


@dataclass
class AbstractiveSummary:
    """Generated sentences plus provenance links back into the extractive set."""

    section: SectionKind
    sentences: list[str]
    provenance: list[tuple[int, Address]] = field(default_factory=list)
