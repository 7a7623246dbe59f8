"""Fetch and cache answers and video captions, or load a fixture corpus.

Every HTTP response is cached as one JSON file keyed by the request hash,
so a warm cache answers repeat runs without any network traffic and cached
corpora are byte-stable across runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping

from .errors import (
    ConfigError,
    MalformedResponse,
    MissingInput,
    NetworkError,
    RateLimited,
    SchemaError,
    ServiceError,
)
from .files import atomic_write_json
from .models import ApiRecord, Corpus, SourceDoc, SourceKind
from .preprocess import sanitize_body

log = logging.getLogger(__name__)

SE_KEY_ENV = "DOCBOOST_SE_KEY"
YT_KEY_ENV = "DOCBOOST_YT_KEY"
SE_URL_ENV = "DOCBOOST_SE_BASE_URL"
YT_URL_ENV = "DOCBOOST_YT_BASE_URL"

_PLACEHOLDER_RE = re.compile(
    r"\[(?:code-snippet|table|figure|external-link)\]")


@dataclass(frozen=True)
class ClientConfig:
    se_base_url: str = "https://api.stackexchange.com/2.3"
    yt_base_url: str = ""
    se_key: str = ""
    yt_key: str = ""
    cache_dir: str = ".docboost-cache"
    limit: int = 10
    retries: int = 3
    backoff_base_ms: int = 500
    parallelism: int = 4
    timeout_s: float = 10.0

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        overrides.setdefault("se_key", os.environ.get(SE_KEY_ENV, ""))
        overrides.setdefault("yt_key", os.environ.get(YT_KEY_ENV, ""))
        if SE_URL_ENV in os.environ:
            overrides.setdefault("se_base_url", os.environ[SE_URL_ENV])
        if YT_URL_ENV in os.environ:
            overrides.setdefault("yt_base_url", os.environ[YT_URL_ENV])
        return cls(**overrides)


@dataclass(frozen=True)
class CacheEntry:
    body: str
    fetched_at: str
    from_cache: bool


class CachedFetcher:
    """GET with bounded retries, persisted verbatim per request hash."""

    def __init__(self, config: ClientConfig, transport, sleep=time.sleep):
        self.config = config
        self.transport = transport
        self._sleep = sleep

    def request_key(self, endpoint: str, params: Mapping[str, object], limit: int) -> str:
        canonical = json.dumps(
            {"endpoint": endpoint,
             "query": {k: str(v) for k, v in params.items()},
             "limit": limit},
            sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def fetch(self, endpoint: str, params: Mapping[str, object], limit: int) -> CacheEntry:
        key = self.request_key(endpoint, params, limit)
        path = os.path.join(self.config.cache_dir, f"{key}.json")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                stored = json.load(fh)
            return CacheEntry(body=stored["body"], fetched_at=stored["fetched_at"],
                              from_cache=True)

        body = self._get_with_retries(endpoint, params)
        fetched_at = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        atomic_write_json(path, {
            "endpoint": endpoint,
            "query": {k: str(v) for k, v in params.items()},
            "limit": limit,
            "fetched_at": fetched_at,
            "body": body,
        })
        return CacheEntry(body=body, fetched_at=fetched_at, from_cache=False)

    def _get_with_retries(self, endpoint: str, params: Mapping[str, object]) -> str:
        last: Exception | None = None
        for attempt in range(self.config.retries):
            if attempt:
                self._sleep(self.config.backoff_base_ms * 2 ** (attempt - 1) / 1000.0)
            try:
                resp = self.transport.get(endpoint, params, timeout=self.config.timeout_s)
            except NetworkError as exc:
                last = exc
                continue
            if resp.status == 429:
                retry_after = resp.headers.get("Retry-After") if resp.headers else None
                raise RateLimited(float(retry_after) if retry_after else None)
            if 500 <= resp.status < 600:
                last = ServiceError(f"{endpoint} answered {resp.status}")
                continue
            if not 200 <= resp.status < 300:
                raise ServiceError(f"{endpoint} answered {resp.status}: {resp.body[:200]}")
            return resp.body
        raise last if last is not None else NetworkError(f"no response from {endpoint}")


def _decode_items(body: str, endpoint: str) -> list[dict]:
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"{endpoint}: {exc}") from exc
    items = data.get("items") if isinstance(data, dict) else None
    if not isinstance(items, list):
        raise MalformedResponse(f"{endpoint}: payload has no items list")
    return items


def _has_textual_content(raw_body: str) -> bool:
    residue = _PLACEHOLDER_RE.sub(" ", sanitize_body(raw_body))
    return bool(residue.strip())


def fetch_answer_posts(api: ApiRecord, limit: int, config: ClientConfig,
                       transport=None, fetcher: CachedFetcher | None = None) -> list[SourceDoc]:
    """Search answers for `library_name api_name`, keeping upvoted prose."""
    if limit < 1:
        raise ConfigError(f"limit must be >= 1, got {limit}")
    if fetcher is None:
        from .transport import RequestsTransport

        fetcher = CachedFetcher(config, transport or RequestsTransport())
    query = f"{api.library_name} {api.api_name}".strip()
    params: dict[str, object] = {"q": query, "pagesize": limit,
                                 "site": "stackoverflow", "filter": "withbody"}
    if config.se_key:
        params["key"] = config.se_key
    endpoint = config.se_base_url.rstrip("/") + "/search"
    entry = fetcher.fetch(endpoint, params, limit)

    docs = []
    for item in _decode_items(entry.body, endpoint):
        raw_id = item.get("answer_id", item.get("post_id"))
        if raw_id is None:
            log.warning("search item without an id skipped: %.80s", item)
            continue
        score = int(item.get("score", 0))
        body = str(item.get("body", ""))
        if score < 1 or not _has_textual_content(body):
            continue
        docs.append(SourceDoc(source_kind=SourceKind.ANSWER_POST,
                              source_id=str(raw_id),
                              url=str(item.get("link", "")),
                              score=score,
                              raw_body=body,
                              fetched_at=entry.fetched_at))
        if len(docs) == limit:
            break
    return docs


def _video_queries(api: ApiRecord) -> list[str]:
    queries = [f"{api.library_name} {api.api_name}".strip()]
    parts = api.api_name.split(".")
    if len(parts) >= 2:
        secondary = f"{parts[-2]} {api.api_name}"
        if secondary not in queries:
            queries.append(secondary)
    return queries


def fetch_video_captions(api: ApiRecord, limit: int, config: ClientConfig,
                         transport=None, fetcher: CachedFetcher | None = None,
                         skip_report: dict[str, int] | None = None) -> list[SourceDoc]:
    """Collect manually captioned videos for the API, earliest rank first."""
    if limit < 1:
        raise ConfigError(f"limit must be >= 1, got {limit}")
    if not config.yt_base_url:
        raise ConfigError("yt_base_url is not configured")
    if fetcher is None:
        from .transport import RequestsTransport

        fetcher = CachedFetcher(config, transport or RequestsTransport())
    report = skip_report if skip_report is not None else {}
    endpoint = config.yt_base_url.rstrip("/") + "/search"

    seen: set[str] = set()
    videos: list[dict] = []
    for query in _video_queries(api):
        params: dict[str, object] = {"q": query, "limit": limit}
        if config.yt_key:
            params["key"] = config.yt_key
        entry = fetcher.fetch(endpoint, params, limit)
        for item in _decode_items(entry.body, endpoint):
            video_id = item.get("video_id")
            if video_id is None or str(video_id) in seen:
                continue
            seen.add(str(video_id))
            videos.append(item)

    chosen: list[tuple[dict, dict]] = []
    for video in videos:
        tracks = video.get("captions") or []
        manual = [t for t in tracks if not t.get("auto", False)]
        if not manual:
            report["no_manual_captions"] = report.get("no_manual_captions", 0) + 1
            continue
        track = manual[0]
        if not track.get("url"):
            report["missing_track_url"] = report.get("missing_track_url", 0) + 1
            continue
        chosen.append((video, track))
        if len(chosen) == limit:
            break

    def download(pair: tuple[dict, dict]) -> SourceDoc:
        video, track = pair
        payload = fetcher.fetch(str(track["url"]), {}, 0)
        return SourceDoc(source_kind=SourceKind.VIDEO_CAPTION,
                         source_id=str(video["video_id"]),
                         url=str(video.get("url", "")),
                         score=0,
                         raw_body=payload.body,
                         fetched_at=payload.fetched_at)

    if not chosen:
        return []
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        return list(pool.map(download, chosen))


def load_fixture_corpus(path: str) -> Corpus:
    """Read a corpus from `api.json` plus `docs/*.json`, filename-ordered."""
    if not os.path.isdir(path):
        raise MissingInput(f"fixture corpus directory not found: {path}")
    api_path = os.path.join(path, "api.json")
    if not os.path.exists(api_path):
        raise SchemaError("missing api.json", path=path)
    with open(api_path, encoding="utf-8") as fh:
        try:
            api = ApiRecord.from_dict(json.load(fh), path=api_path)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"api.json is not valid JSON: {exc}", path=api_path) from exc

    docs_dir = os.path.join(path, "docs")
    if not os.path.isdir(docs_dir):
        raise SchemaError("missing docs/ directory", path=path)
    docs: list[SourceDoc] = []
    seen: set[tuple[str, str]] = set()
    for name in sorted(os.listdir(docs_dir)):
        if not name.endswith(".json"):
            continue
        doc_path = os.path.join(docs_dir, name)
        with open(doc_path, encoding="utf-8") as fh:
            try:
                doc = SourceDoc.from_dict(json.load(fh), path=doc_path)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"not valid JSON: {exc}", path=doc_path) from exc
        key = (doc.source_kind.value, doc.source_id)
        if key in seen:
            raise SchemaError(f"duplicate source_id {doc.source_id}", path=doc_path)
        seen.add(key)
        docs.append(doc)
    return Corpus(api=api, docs=tuple(docs))
