"""Guided abstractive summarization: prompts, budgets, generation, provenance.

The prompt packs an instruction, the original doc section, a few worked
example pairs, and the extractive sentences tagged with their addresses.
Everything is budgeted against the model's context window; generated
sentences get linked back to their closest extractive source.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import EmptyCompletion, OverheadTooLarge, ServiceError
from .extsum import EmbeddingProvider, cosine
from .models import Address, ExtractiveSummary, SectionKind
from .preprocess import split_text
from .transport import RequestsTransport, Transport

log = logging.getLogger(__name__)

LLM_KEY_ENV = "DOCBOOST_LLM_KEY"

# What each documentation section is expected to cover, in this project's
# own wording; embedded into the prompt instruction.
SECTION_GUIDANCE: dict[SectionKind, str] = {
    SectionKind.FUNCTIONALITY: (
        "what the API does: the operation it performs and the result it returns"),
    SectionKind.PARAMETERS: (
        "how the API is configured: its arguments, accepted value ranges, "
        "defaults, and input and output characteristics"),
    SectionKind.NOTES: (
        "practical caveats: performance behavior, version and platform "
        "concerns, deprecations, and recommended alternatives"),
}


@dataclass(frozen=True)
class TokenBudget:
    context_limit: int = 8192
    response_reserve: int = 500
    chars_per_token: float = 4.0
    counter: Callable[[str], int] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.context_limit > self.response_reserve > 0:
            raise ValueError("need context_limit > response_reserve > 0, got "
                             f"{self.context_limit}/{self.response_reserve}")
        if self.chars_per_token <= 0:
            raise ValueError(f"chars_per_token must be positive: {self.chars_per_token}")

    @property
    def allowance(self) -> int:
        return self.context_limit - self.response_reserve


def count_tokens(text: str, budget: TokenBudget) -> int:
    """Heuristic char-ratio count unless a real tokenizer was plugged in."""
    if budget.counter is not None:
        return budget.counter(text)
    return math.ceil(len(text) / budget.chars_per_token)


def budget_items(items: Sequence[str], fixed_overhead: int,
                 budget: TokenBudget) -> list[str]:
    """Longest prefix of items fitting beside the overhead; never splits one."""
    if fixed_overhead > budget.allowance:
        raise OverheadTooLarge(
            f"fixed overhead {fixed_overhead} exceeds allowance {budget.allowance}")
    total = fixed_overhead
    included: list[str] = []
    for item in items:
        cost = count_tokens(item, budget)
        if total + cost > budget.allowance:
            break
        included.append(item)
        total += cost
    if items and not included:
        log.warning("no item fits the token allowance (first needs %d, free %d)",
                    count_tokens(items[0], budget), budget.allowance - fixed_overhead)
    return included


@dataclass
class PromptSpec:
    instruction: str
    section: SectionKind
    api_doc: str
    extractive: ExtractiveSummary
    examples: list[tuple[str, str]]
    budget_sentences: int

    def __post_init__(self):
        if self.budget_sentences < 1:
            raise ValueError(f"budget_sentences must be >= 1: {self.budget_sentences}")


def default_instruction(section: SectionKind, budget_sentences: int) -> str:
    return (
        f"You are updating the {section.value} section of an API reference page. "
        f"This section covers {SECTION_GUIDANCE[section]}. "
        f"Using only the source sentences below, write an update summary of at "
        f"most {budget_sentences} sentences. Skip anything the original "
        f"documentation already says, merge redundant sentences, and keep "
        f"identifiers exactly as written."
    )


def _render(spec: PromptSpec, example_count: int) -> str:
    blocks = [spec.instruction]
    blocks.append("Original documentation:\n" + (spec.api_doc or "(none)"))
    for i, (ext, abs_) in enumerate(spec.examples[:example_count], start=1):
        blocks.append(f"Example {i} source sentences:\n{ext}\n"
                      f"Example {i} summary:\n{abs_}")
    lines = [f"[{s.address.tag()}] {s.text}" for s in spec.extractive.sentences]
    blocks.append("Source sentences:\n" + "\n".join(lines))
    return "\n\n".join(blocks)


def build_prompt(spec: PromptSpec, budget: TokenBudget) -> str:
    """Render the deterministic prompt, shedding examples to fit the budget."""
    for keep in range(len(spec.examples), -1, -1):
        prompt = _render(spec, keep)
        if count_tokens(prompt, budget) <= budget.allowance:
            if keep < len(spec.examples):
                log.info("dropped %d example pair(s) to fit the token budget",
                         len(spec.examples) - keep)
            return prompt
    raise OverheadTooLarge(
        "prompt exceeds the token allowance even with every example dropped")


class ChatCompletionClient:
    """Minimal chat-completion POST client with pinned temperature 0."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 transport: Transport | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(LLM_KEY_ENV, "")
        self.transport = transport if transport is not None else RequestsTransport()
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = self.transport.post_json(self.endpoint, payload, headers=headers,
                                        timeout=self.timeout)
        if not 200 <= resp.status < 300:
            raise ServiceError(f"chat completion {resp.status}: {resp.body[:500]}")
        try:
            parsed = json.loads(resp.body)
            return parsed["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ServiceError(f"unusable completion payload: {exc}") from exc


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ReplayChatClient:
    """Serves completions from a committed prompt-hash fixture."""

    def __init__(self, fixture: str | dict[str, str]):
        if isinstance(fixture, dict):
            self._responses = dict(fixture)
            self._path = "<inline>"
        else:
            with open(fixture, encoding="utf-8") as fh:
                self._responses = json.load(fh)
            self._path = fixture

    def complete(self, prompt: str) -> str:
        digest = prompt_hash(prompt)
        if digest not in self._responses:
            raise ServiceError(f"replay miss in {self._path}: {digest}")
        return self._responses[digest]


def generate(client, prompt: str, budget_sentences: int) -> list[str]:
    """Run one completion and cut the reply down to the sentence budget."""
    text = client.complete(prompt)
    if not text or not text.strip():
        raise EmptyCompletion("model returned an empty completion")
    sentences = split_text(text)
    if len(sentences) > budget_sentences:
        log.info("truncating completion from %d to %d sentences",
                 len(sentences), budget_sentences)
    return sentences[:budget_sentences]


def link_provenance(abstractive: Sequence[str], extractive: ExtractiveSummary,
                    provider: EmbeddingProvider, *,
                    strict: bool = False) -> list[tuple[int, Address]]:
    """Greedily link each generated sentence to its closest source sentence.

    Ties go to the earlier extractive address. In strict mode each source is
    consumed once; when all are consumed the pool resets so later sentences
    still get a link.
    """
    if not extractive.sentences:
        raise ValueError("cannot link provenance against an empty extractive set")
    source_vecs = [provider.embed(s.text) for s in extractive.sentences]
    used: set[int] = set()
    links: list[tuple[int, Address]] = []
    for i, text in enumerate(abstractive):
        vec = provider.embed(text)
        pool = [j for j in range(len(source_vecs)) if j not in used] if strict else \
            list(range(len(source_vecs)))
        if not pool:
            used.clear()
            pool = list(range(len(source_vecs)))
        best = max(pool, key=lambda j: (cosine(vec, source_vecs[j]), -j))
        links.append((i, extractive.sentences[best].address))
        used.add(best)
    return links
