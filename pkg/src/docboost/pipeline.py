"""Stage functions behind both `augment` and `stage`: each step is a pure
transform between the NDJSON artifact formats, so chaining the single-stage
command reproduces the full run byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from . import __version__
from .abstract import (
    ChatCompletionClient,
    PromptSpec,
    ReplayChatClient,
    TokenBudget,
    build_prompt,
    default_instruction,
    generate,
    link_provenance,
)
from .classify import ClassifiedSentence, Scorer, classify_sentences, fallback_scorer
from .config import PipelineConfig
from .errors import ConfigError, MissingInput, SchemaError
from .extsum import (
    EmbeddingProvider,
    TfidfEmbedder,
    build_graph,
    rank_extup,
    rank_lexrank,
    rank_textrank,
    select_topk,
)
from .ingest import ClientConfig, fetch_answer_posts, fetch_video_captions, load_fixture_corpus
from .models import (
    SUMMARY_SECTIONS,
    AbstractiveSummary,
    Address,
    ApiRecord,
    Corpus,
    ExtractiveSummary,
    SectionKind,
    Sentence,
    SourceDoc,
    SourceKind,
)
from .preprocess import filter_caption_sentences, parse_caption, sanitize_body, split_sentences
from .sidecar import ReplayEmbedder, ReplayScorer, SidecarClient, SidecarEmbedder, SidecarScorer

log = logging.getLogger(__name__)

STAGE_NAMES = ("ingest", "preprocess", "classify", "extract", "abstract")

ARTIFACTS = {
    "ingest": "docs.ndjson",
    "preprocess": "sentences.ndjson",
    "classify": "classified.ndjson",
    "extract": "extractive.ndjson",
    "abstract": "abstractive.ndjson",
}


# ---------------------------------------------------------------------------
# Backend construction


def parse_lexicons(raw: dict[str, list[str]] | None):
    if raw is None:
        return None
    return {SectionKind.from_name(name): tuple(entries)
            for name, entries in raw.items()}


def make_scorer(config: PipelineConfig) -> Scorer:
    if config.scorer == "fallback":
        return fallback_scorer(parse_lexicons(config.lexicons))
    if config.scorer == "replay":
        return ReplayScorer(config.scorer_replay)
    return SidecarScorer(SidecarClient.spawn(shlex.split(config.sidecar_cmd)))


def make_embedder_factory(config: PipelineConfig) -> Callable[[Sequence[str]], EmbeddingProvider]:
    """Factory taking the texts one ranking problem spans.

    The TF-IDF fallback is fit per call; sidecar and replay providers carry
    a fixed space and ignore the texts.
    """
    if config.embedder == "tfidf":
        return lambda texts: TfidfEmbedder(texts)
    if config.embedder == "replay":
        provider = ReplayEmbedder(config.embedder_replay)
        return lambda texts: provider
    client = SidecarClient.spawn(shlex.split(config.sidecar_cmd))
    provider = SidecarEmbedder(client)
    return lambda texts: provider


def make_llm_client(config: PipelineConfig):
    if config.llm_replay:
        return ReplayChatClient(config.llm_replay)
    if not config.llm_endpoint:
        raise ConfigError("no llm_endpoint configured and no llm_replay fixture")
    return ChatCompletionClient(config.llm_endpoint, config.llm_model or "default")


# ---------------------------------------------------------------------------
# Stages


def run_ingest(corpus_path: str, config: PipelineConfig, transport=None) -> Corpus:
    """Load a fixture corpus, or fetch and cache one when docs/ is absent."""
    if os.path.isdir(os.path.join(corpus_path, "docs")):
        return load_fixture_corpus(corpus_path)
    api_path = corpus_path if corpus_path.endswith(".json") else \
        os.path.join(corpus_path, "api.json")
    if not os.path.exists(api_path):
        raise MissingInput(f"no corpus at {corpus_path}: "
                           "expected api.json, with docs/ for fixture corpora")
    with open(api_path, encoding="utf-8") as fh:
        api = ApiRecord.from_dict(json.load(fh), path=api_path)
    client_config = ClientConfig.from_env(cache_dir=config.cache_dir,
                                          limit=config.fetch_limit)
    answers = fetch_answer_posts(api, config.fetch_limit, client_config,
                                 transport=transport)
    if client_config.yt_base_url:
        captions = fetch_video_captions(api, config.fetch_limit, client_config,
                                        transport=transport)
    else:
        log.warning("no caption endpoint configured, ingesting answers only")
        captions = []
    return Corpus(api=api, docs=tuple(answers) + tuple(captions))


def run_preprocess(corpus: Corpus, config: PipelineConfig) -> list[Sentence]:
    """Sanitized answer sentences first, then BM25-surviving caption sentences."""
    answer_sentences: list[Sentence] = []
    caption_sentences: list[Sentence] = []
    for doc in corpus.docs:
        if doc.source_kind is SourceKind.ANSWER_POST:
            answer_sentences.extend(split_sentences(sanitize_body(doc.raw_body), doc))
        else:
            caption_sentences.extend(split_sentences(parse_caption(doc.raw_body), doc))
    kept = filter_caption_sentences(caption_sentences, corpus.api,
                                    k1=config.bm25_k1, b=config.bm25_b)
    return answer_sentences + kept


def run_classify(sentences: Sequence[Sentence], api: ApiRecord, scorer: Scorer,
                 config: PipelineConfig) -> list[ClassifiedSentence]:
    return classify_sentences(scorer, sentences, api,
                              threshold=config.context_threshold,
                              concat_both=config.concat_both)


def run_extract(labeled: Sequence[tuple[Sentence, SectionKind]], api: ApiRecord,
                config: PipelineConfig,
                embedder_factory: Callable[[Sequence[str]], EmbeddingProvider],
                ) -> dict[SectionKind, ExtractiveSummary]:
    """Rank each section's candidates against that section's original text."""
    summaries: dict[SectionKind, ExtractiveSummary] = {}
    for section in SUMMARY_SECTIONS:
        candidates = [sentence for sentence, label in labeled if label is section]
        if not candidates:
            summaries[section] = ExtractiveSummary(sentences=[], scores=[],
                                                   section=section)
            continue
        api_doc_text = api.doc_sections.get(section, "")
        if config.algorithm == "lexrank":
            result = rank_lexrank(candidates, phi=config.phi, tol=config.tol,
                                  max_iter=config.max_iter,
                                  sim_threshold=config.sim_threshold)
        else:
            provider = embedder_factory([s.text for s in candidates] + [api_doc_text])
            graph = build_graph(candidates, provider, api_doc_text)
            rank = rank_extup if config.algorithm == "extup" else rank_textrank
            result = rank(graph, phi=config.phi, tol=config.tol,
                          max_iter=config.max_iter,
                          normalize_each_iter=config.normalize_each_iter,
                          literal_out_degree=config.literal_out_degree)
        summary = select_topk(result, candidates, config.effective_k)
        summary.section = section
        summaries[section] = summary
    return summaries


def load_example_pairs(config: PipelineConfig, api: ApiRecord,
                       ) -> dict[SectionKind, list[tuple[str, str]]]:
    """In-context pairs per section, never drawn from the API under augmentation."""
    pairs: dict[SectionKind, list[tuple[str, str]]] = {s: [] for s in SUMMARY_SECTIONS}
    if not config.examples_dir or config.example_pairs == 0:
        return pairs
    for section in SUMMARY_SECTIONS:
        path = os.path.join(config.examples_dir, f"{section.value}.json")
        if not os.path.exists(path):
            raise ConfigError(f"missing example-pair file: {path}")
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
        eligible = [e for e in entries if e.get("api_name") != api.api_name]
        if len(eligible) < config.example_pairs:
            raise ConfigError(
                f"{path} offers {len(eligible)} pairs for APIs other than "
                f"{api.api_name}; {config.example_pairs} required")
        pairs[section] = [(str(e["source"]), str(e["summary"]))
                          for e in eligible[:config.example_pairs]]
    return pairs


def run_abstract(extracts: dict[SectionKind, ExtractiveSummary], api: ApiRecord,
                 config: PipelineConfig, llm_client,
                 embedder_factory: Callable[[Sequence[str]], EmbeddingProvider],
                 ) -> dict[SectionKind, AbstractiveSummary]:
    budget = TokenBudget(context_limit=config.context_limit,
                         response_reserve=config.response_reserve,
                         chars_per_token=config.chars_per_token)
    examples = load_example_pairs(config, api)
    out: dict[SectionKind, AbstractiveSummary] = {}
    for section in SUMMARY_SECTIONS:
        extractive = extracts[section]
        if not extractive.sentences:
            out[section] = AbstractiveSummary(section=section, sentences=[])
            continue
        spec = PromptSpec(
            instruction=default_instruction(section, config.budget_sentences),
            section=section,
            api_doc=api.doc_sections.get(section, ""),
            extractive=extractive,
            examples=examples[section],
            budget_sentences=config.budget_sentences)
        prompt = build_prompt(spec, budget)
        generated = generate(llm_client, prompt, config.budget_sentences)
        provider = embedder_factory([s.text for s in extractive.sentences] + generated)
        links = link_provenance(generated, extractive, provider,
                                strict=config.strict_provenance)
        out[section] = AbstractiveSummary(section=section, sentences=generated,
                                          provenance=links)
    return out


# ---------------------------------------------------------------------------
# NDJSON artifact formats


def ndjson_dumps(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n"
                   for r in records)


def ndjson_loads(text: str, path: str | None = None) -> list[dict]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno} is not valid JSON: {exc}",
                              path=path) from exc
    return records


def classified_to_dict(item: ClassifiedSentence) -> dict:
    return {
        "address": {"source_id": item.sentence.address.source_id,
                    "ordinal": item.sentence.address.ordinal},
        "origin_kind": item.sentence.origin_kind.value,
        "text": item.sentence.text,
        "label": item.label.value,
        "logits": [float(v) for v in item.logits.values],
        "flags": {"preceding": item.flags.preceding,
                  "following": item.flags.following,
                  "c_preceding": item.flags.c_preceding,
                  "c_following": item.flags.c_following},
    }


def classified_from_dict(raw: dict, path: str | None = None,
                         ) -> tuple[Sentence, SectionKind]:
    try:
        sentence = Sentence(text=str(raw["text"]),
                            address=Address(str(raw["address"]["source_id"]),
                                            int(raw["address"]["ordinal"])),
                            origin_kind=SourceKind.from_name(str(raw["origin_kind"])))
        return sentence, SectionKind.from_name(str(raw["label"]))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad classified record: {exc}", path=path) from None


def extractive_to_dict(summary: ExtractiveSummary) -> dict:
    return {
        "section": summary.section.value if summary.section else None,
        "sentences": [s.to_dict() for s in summary.sentences],
        "scores": [float(v) for v in summary.scores],
    }


def extractive_from_dict(raw: dict, path: str | None = None) -> ExtractiveSummary:
    try:
        return ExtractiveSummary(
            sentences=[Sentence.from_dict(s, path=path) for s in raw["sentences"]],
            scores=[float(v) for v in raw["scores"]],
            section=SectionKind.from_name(str(raw["section"])))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad extractive record: {exc}", path=path) from None


def abstractive_to_dict(summary: AbstractiveSummary) -> dict:
    return {
        "section": summary.section.value,
        "sentences": list(summary.sentences),
        "provenance": [{"sentence": i,
                        "source_id": address.source_id,
                        "ordinal": address.ordinal}
                       for i, address in summary.provenance],
    }


# ---------------------------------------------------------------------------
# Assembly and rendering


@dataclass
class AugmentedDoc:
    api: ApiRecord
    extractive: dict[SectionKind, ExtractiveSummary]
    abstractive: dict[SectionKind, AbstractiveSummary]
    run_metadata: dict[str, Any]

    def __post_init__(self):
        for mapping in (self.extractive, self.abstractive):
            if set(mapping) != set(SUMMARY_SECTIONS):
                raise SchemaError("augmented doc must carry all three sections")


def build_run_metadata(config: PipelineConfig, corpus: Corpus) -> dict[str, Any]:
    # Stamped with the newest fetch time rather than the wall clock so a
    # replayed run reproduces its artifacts byte for byte.
    fetched = max((doc.fetched_at for doc in corpus.docs), default="")
    return {
        "config_hash": config.config_hash(),
        "generated_at": fetched,
        "seed": config.seed,
        "versions": {"docboost": __version__},
    }


def assemble(corpus: Corpus, extracts: dict[SectionKind, ExtractiveSummary],
             abstracts: dict[SectionKind, AbstractiveSummary],
             config: PipelineConfig) -> AugmentedDoc:
    return AugmentedDoc(api=corpus.api, extractive=extracts, abstractive=abstracts,
                        run_metadata=build_run_metadata(config, corpus))


def render_json(doc: AugmentedDoc, corpus: Corpus) -> str:
    from .files import dump_json

    sections = {}
    for section in SUMMARY_SECTIONS:
        extractive = doc.extractive[section]
        abstractive = doc.abstractive[section]
        provenance = []
        for i, address in abstractive.provenance:
            source = corpus.doc_by_id(address.source_id)
            provenance.append({"sentence": i,
                               "source_id": address.source_id,
                               "ordinal": address.ordinal,
                               "url": source.url if source else ""})
        sections[section.value] = {
            "empty": not abstractive.sentences,
            "original": doc.api.doc_sections.get(section, ""),
            "extractive": {"sentences": [s.to_dict() for s in extractive.sentences],
                           "scores": [float(v) for v in extractive.scores]},
            "abstractive": {"sentences": list(abstractive.sentences),
                            "provenance": provenance},
        }
    return dump_json({"api": doc.api.to_dict(),
                      "sections": sections,
                      "run_metadata": doc.run_metadata})


def render_markdown(doc: AugmentedDoc, corpus: Corpus) -> str:
    lines: list[str] = [f"# {doc.api.api_name}", ""]
    if doc.api.library_name:
        lines += [f"Library: `{doc.api.library_name}`", ""]
    footnotes: list[str] = []
    for section in SUMMARY_SECTIONS:
        abstractive = doc.abstractive[section]
        lines += [f"## {section.value.capitalize()}", ""]
        original = doc.api.doc_sections.get(section, "").strip()
        if original:
            lines += ["> " + original.replace("\n", "\n> "), ""]
        if not abstractive.sentences:
            lines += ["_No update for this section._", ""]
            continue
        links = dict(abstractive.provenance)
        for i, text in enumerate(abstractive.sentences):
            marker = ""
            if i in links:
                footnote_id = len(footnotes) + 1
                address = links[i]
                source = corpus.doc_by_id(address.source_id)
                url = source.url if source else ""
                footnotes.append(
                    f"[^{footnote_id}]: {address.tag()}" + (f" <{url}>" if url else ""))
                marker = f" [^{footnote_id}]"
            lines.append(f"{i + 1}. {text}{marker}")
        lines.append("")
    if footnotes:
        lines += ["## Sources", ""] + footnotes + [""]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Full run


@dataclass
class RunArtifacts:
    """Every artifact of one augment run, rendered but not yet written."""

    files: dict[str, str]

    def write(self, output_dir: str) -> list[str]:
        from .files import atomic_write_text

        os.makedirs(output_dir, exist_ok=True)
        written = []
        for name, content in sorted(self.files.items()):
            path = os.path.join(output_dir, name)
            atomic_write_text(path, content)
            written.append(path)
        return written


def run_augment(corpus_path: str, config: PipelineConfig, transport=None,
                ) -> RunArtifacts:
    """Compute the whole artifact set in memory; nothing touches disk here."""
    corpus = _staged(run_ingest, "ingest")(corpus_path, config, transport)
    sentences = _staged(run_preprocess, "preprocess")(corpus, config)
    scorer = make_scorer(config)
    classified = _staged(run_classify, "classify")(sentences, corpus.api, scorer, config)
    embedder_factory = make_embedder_factory(config)
    labeled = [(c.sentence, c.label) for c in classified]
    extracts = _staged(run_extract, "extract")(labeled, corpus.api, config,
                                               embedder_factory)
    llm_client = make_llm_client(config)
    abstracts = _staged(run_abstract, "abstract")(extracts, corpus.api, config,
                                                  llm_client, embedder_factory)
    doc = assemble(corpus, extracts, abstracts, config)
    return RunArtifacts(files={
        ARTIFACTS["ingest"]: ndjson_dumps([d.to_dict() for d in corpus.docs]),
        ARTIFACTS["preprocess"]: ndjson_dumps([s.to_dict() for s in sentences]),
        ARTIFACTS["classify"]: ndjson_dumps([classified_to_dict(c) for c in classified]),
        ARTIFACTS["extract"]: ndjson_dumps(
            [extractive_to_dict(extracts[s]) for s in SUMMARY_SECTIONS]),
        ARTIFACTS["abstract"]: ndjson_dumps(
            [abstractive_to_dict(abstracts[s]) for s in SUMMARY_SECTIONS]),
        "augmented.json": render_json(doc, corpus),
        "augmented.md": render_markdown(doc, corpus),
    })


def _staged(fn, name: str):
    from .errors import DocboostError

    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DocboostError as exc:
            if not hasattr(exc, "stage"):
                exc.stage = name
            raise
    return wrapped


def run_single_stage(stage: str, corpus_path: str, in_text: str | None,
                     config: PipelineConfig, in_path: str | None = None) -> str:
    """One stage: artifact text in, artifact text out (ingest reads the corpus)."""
    runner = _staged(_STAGE_RUNNERS[stage], stage)
    return runner(corpus_path, in_text, config, in_path)


def _stage_ingest(corpus_path, in_text, config, in_path):
    corpus = run_ingest(corpus_path, config)
    return ndjson_dumps([d.to_dict() for d in corpus.docs])


def _load_api(corpus_path: str) -> ApiRecord:
    api_path = corpus_path if corpus_path.endswith(".json") else \
        os.path.join(corpus_path, "api.json")
    if not os.path.exists(api_path):
        raise MissingInput(f"no api.json under {corpus_path}")
    with open(api_path, encoding="utf-8") as fh:
        return ApiRecord.from_dict(json.load(fh), path=api_path)


def _stage_preprocess(corpus_path, in_text, config, in_path):
    api = _load_api(corpus_path)
    docs = [SourceDoc.from_dict(raw, path=in_path)
            for raw in ndjson_loads(in_text, path=in_path)]
    corpus = Corpus(api=api, docs=tuple(docs))
    sentences = run_preprocess(corpus, config)
    return ndjson_dumps([s.to_dict() for s in sentences])


def _stage_classify(corpus_path, in_text, config, in_path):
    api = _load_api(corpus_path)
    sentences = [Sentence.from_dict(raw, path=in_path)
                 for raw in ndjson_loads(in_text, path=in_path)]
    classified = run_classify(sentences, api, make_scorer(config), config)
    return ndjson_dumps([classified_to_dict(c) for c in classified])


def _stage_extract(corpus_path, in_text, config, in_path):
    api = _load_api(corpus_path)
    labeled = [classified_from_dict(raw, path=in_path)
               for raw in ndjson_loads(in_text, path=in_path)]
    extracts = run_extract(labeled, api, config, make_embedder_factory(config))
    return ndjson_dumps([extractive_to_dict(extracts[s]) for s in SUMMARY_SECTIONS])


def _stage_abstract(corpus_path, in_text, config, in_path):
    api = _load_api(corpus_path)
    extracts = {}
    for raw in ndjson_loads(in_text, path=in_path):
        summary = extractive_from_dict(raw, path=in_path)
        extracts[summary.section] = summary
    missing = set(SUMMARY_SECTIONS) - set(extracts)
    if missing:
        raise SchemaError("extractive input misses sections: "
                          + ", ".join(sorted(s.value for s in missing)),
                          path=in_path)
    abstracts = run_abstract(extracts, api, config, make_llm_client(config),
                             make_embedder_factory(config))
    return ndjson_dumps([abstractive_to_dict(abstracts[s]) for s in SUMMARY_SECTIONS])


_STAGE_RUNNERS = {
    "ingest": _stage_ingest,
    "preprocess": _stage_preprocess,
    "classify": _stage_classify,
    "extract": _stage_extract,
    "abstract": _stage_abstract,
}
