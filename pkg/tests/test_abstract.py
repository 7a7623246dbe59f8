import json
import logging

import pytest

from docboost.abstract import (
    ChatCompletionClient,
    PromptSpec,
    ReplayChatClient,
    TokenBudget,
    budget_items,
    build_prompt,
    count_tokens,
    default_instruction,
    generate,
    link_provenance,
    prompt_hash,
)
from docboost.errors import EmptyCompletion, NetworkError, OverheadTooLarge, ServiceError
from docboost.extsum import TfidfEmbedder
from docboost.models import (
    Address,
    ExtractiveSummary,
    SectionKind,
    Sentence,
    SourceKind,
)
from docboost.transport import TransportResponse


def _extractive(texts, source_id="a1"):
    sents = [Sentence(text=t, address=Address(source_id, i),
                      origin_kind=SourceKind.ANSWER_POST)
             for i, t in enumerate(texts)]
    return ExtractiveSummary(sentences=sents, scores=[0.0] * len(sents))


def _spec(examples=None, texts=("tanh squashes input.", "output range bounded.")):
    extractive = _extractive(list(texts))
    return PromptSpec(
        instruction=default_instruction(SectionKind.FUNCTIONALITY, 5),
        section=SectionKind.FUNCTIONALITY,
        api_doc="Applies the hyperbolic tangent function.",
        extractive=extractive,
        examples=examples if examples is not None else [
            ("src one", "sum one"), ("src two", "sum two"), ("src three", "sum three")],
        budget_sentences=5,
    )


# ---------------------------------------------------------------------------
# budgets

def test_token_budget_validation():
    TokenBudget()
    with pytest.raises(ValueError):
        TokenBudget(context_limit=400, response_reserve=500)
    with pytest.raises(ValueError):
        TokenBudget(response_reserve=0)
    with pytest.raises(ValueError):
        TokenBudget(chars_per_token=0)


def test_count_tokens_heuristic():
    budget = TokenBudget()
    assert count_tokens("", budget) == 0
    assert count_tokens("x" * 8, budget) == 2
    assert count_tokens("x" * 9, budget) == 3
    # ~4,598 chars at 4 chars/token lands on the documented ~1,150.
    assert count_tokens("x" * 4598, budget) == 1150


def test_count_tokens_pluggable_counter():
    budget = TokenBudget(counter=lambda text: len(text.split()))
    assert count_tokens("three word text", budget) == 3


def test_budget_items_reference_arithmetic():
    budget = TokenBudget(context_limit=8192, response_reserve=500)
    items = ["y" * 4600] * 10
    assert len(budget_items(items, fixed_overhead=394, budget=budget)) == 6


def test_budget_items_empty_list():
    assert budget_items([], 100, TokenBudget()) == []


def test_budget_items_first_item_too_large(caplog):
    budget = TokenBudget(context_limit=100, response_reserve=50)
    with caplog.at_level(logging.WARNING):
        included = budget_items(["z" * 1000], 10, budget)
    assert included == []
    assert any("allowance" in r.message for r in caplog.records)


def test_budget_items_stops_at_first_overflow():
    budget = TokenBudget(context_limit=100, response_reserve=50,
                         counter=lambda t: int(t))
    assert budget_items(["10", "90", "1"], 0, budget) == ["10"]


def test_budget_items_overhead_too_large():
    with pytest.raises(OverheadTooLarge):
        budget_items(["x"], 10_000, TokenBudget())


# ---------------------------------------------------------------------------
# prompts

def test_build_prompt_deterministic():
    budget = TokenBudget()
    assert build_prompt(_spec(), budget) == build_prompt(_spec(), budget)


def test_build_prompt_layout():
    prompt = build_prompt(_spec(), TokenBudget())
    assert prompt.startswith("You are updating the functionality section")
    assert "Original documentation:\nApplies the hyperbolic tangent function." in prompt
    assert "[a1#0] tanh squashes input." in prompt
    assert "[a1#1] output range bounded." in prompt
    assert prompt.index("Example 1") < prompt.index("Example 3") < prompt.index(
        "Source sentences:")


def test_build_prompt_empty_doc_is_marked():
    spec = _spec()
    spec.api_doc = ""
    assert "Original documentation:\n(none)" in build_prompt(spec, TokenBudget())


def test_build_prompt_drops_examples_last_first():
    # Counter counts example markers only: each rendered pair contributes
    # two "Example" occurrences, so an allowance of 2 admits exactly one.
    budget = TokenBudget(context_limit=3, response_reserve=1,
                         counter=lambda t: t.count("Example"))
    prompt = build_prompt(_spec(), budget)
    assert "Example 1" in prompt
    assert "Example 2" not in prompt and "Example 3" not in prompt
    assert "[a1#0]" in prompt and "[a1#1]" in prompt


def test_build_prompt_overhead_too_large():
    budget = TokenBudget(context_limit=20, response_reserve=10)
    with pytest.raises(OverheadTooLarge):
        build_prompt(_spec(), budget)


def test_budget_safety_invariant():
    budget = TokenBudget(context_limit=300, response_reserve=100)
    prompt = build_prompt(_spec(), budget)
    assert count_tokens(prompt, budget) <= budget.allowance


# ---------------------------------------------------------------------------
# chat clients

class _FakeTransport:
    def __init__(self, status=200, body=None, exc=None):
        self.calls = []
        self.exc = exc
        self.status = status
        self.body = body if body is not None else json.dumps(
            {"choices": [{"message": {"content": "Generated text."}}]})

    def get(self, url, params, headers=None, timeout=10.0):
        raise AssertionError("chat client must not GET")

    def post_json(self, url, payload, headers=None, timeout=10.0):
        if self.exc:
            raise self.exc
        self.calls.append((url, payload, headers or {}))
        return TransportResponse(self.status, self.body)


def test_chat_client_posts_pinned_payload():
    transport = _FakeTransport()
    client = ChatCompletionClient("https://llm.test/v1/chat", "test-model",
                                  api_key="sk-test", transport=transport)
    text = client.complete("the prompt")
    assert text == "Generated text."
    url, payload, headers = transport.calls[0]
    assert url == "https://llm.test/v1/chat"
    assert payload["temperature"] == 0
    assert payload["model"] == "test-model"
    assert payload["messages"] == [{"role": "user", "content": "the prompt"}]
    assert headers["Authorization"] == "Bearer sk-test"


def test_chat_client_surfaces_service_error():
    client = ChatCompletionClient("https://llm.test", "m", api_key="k",
                                  transport=_FakeTransport(status=503, body="overloaded"))
    with pytest.raises(ServiceError, match="overloaded"):
        client.complete("p")


def test_chat_client_rejects_malformed_payload():
    client = ChatCompletionClient("https://llm.test", "m", api_key="k",
                                  transport=_FakeTransport(body="not json"))
    with pytest.raises(ServiceError):
        client.complete("p")


def test_chat_client_propagates_network_error():
    client = ChatCompletionClient("https://llm.test", "m", api_key="k",
                                  transport=_FakeTransport(exc=NetworkError("down")))
    with pytest.raises(NetworkError):
        client.complete("p")


def test_replay_client_roundtrip(tmp_path):
    fixture = {prompt_hash("known prompt"): "Replayed answer."}
    path = tmp_path / "llm.json"
    path.write_text(json.dumps(fixture), encoding="utf-8")
    client = ReplayChatClient(str(path))
    assert client.complete("known prompt") == "Replayed answer."
    with pytest.raises(ServiceError, match=prompt_hash("unknown")):
        client.complete("unknown")


# ---------------------------------------------------------------------------
# generate

def test_generate_truncates_to_budget():
    reply = " ".join(f"Sentence number {i} stands alone." for i in range(7))
    client = ReplayChatClient({prompt_hash("p"): reply})
    sentences = generate(client, "p", budget_sentences=5)
    assert len(sentences) == 5
    assert sentences[0] == "Sentence number 0 stands alone."


def test_generate_empty_completion():
    client = ReplayChatClient({prompt_hash("p"): "   "})
    with pytest.raises(EmptyCompletion):
        generate(client, "p", budget_sentences=5)


# ---------------------------------------------------------------------------
# provenance

def test_link_identical_sentence():
    extractive = _extractive(["tanh squashes input", "output range bounded"])
    provider = TfidfEmbedder([s.text for s in extractive.sentences])
    links = link_provenance(["output range bounded"], extractive, provider)
    assert links == [(0, Address("a1", 1))]


def test_link_single_candidate():
    extractive = _extractive(["only source sentence"])
    provider = TfidfEmbedder(["only source sentence", "anything", "else"])
    links = link_provenance(["anything", "else"], extractive, provider)
    assert links == [(0, Address("a1", 0)), (1, Address("a1", 0))]


def test_link_greedy_trace_hand_fixture():
    ext_texts = ["tanh squashes input", "output range bounded", "gate uses tanh"]
    abs_texts = ["tanh squashes input", "the output range is bounded", "tanh squashes"]
    extractive = _extractive(ext_texts)
    provider = TfidfEmbedder(ext_texts + abs_texts)
    links = link_provenance(abs_texts, extractive, provider)
    # Hand trace: exact match, then the range sentence, then back to the
    # squash sentence (shared tanh+squashes beats shared tanh alone).
    assert links == [(0, Address("a1", 0)), (1, Address("a1", 1)), (2, Address("a1", 0))]


def test_link_tie_breaks_to_earlier_address():
    extractive = _extractive(["alpha beta", "gamma delta"])
    provider = TfidfEmbedder(["alpha beta", "gamma delta", "unrelated words"])
    links = link_provenance(["unrelated words"], extractive, provider)
    assert links == [(0, Address("a1", 0))]


def test_link_strict_mode_consumes_then_resets():
    ext_texts = ["tanh squashes input", "output range bounded"]
    extractive = _extractive(ext_texts)
    provider = TfidfEmbedder(ext_texts)
    abs_texts = ["tanh squashes input"] * 3
    links = link_provenance(abs_texts, extractive, provider, strict=True)
    assert [a.ordinal for _, a in links] == [0, 1, 0]


def test_link_requires_candidates():
    provider = TfidfEmbedder(["x"])
    with pytest.raises(ValueError):
        link_provenance(["a"], ExtractiveSummary(sentences=[], scores=[]), provider)
