"""Client for the model-inference sidecar and its replay fixtures.

The sidecar is a separate process answering newline-delimited JSON requests
`{"op", "payload", "id"}` with one `{"id", "ok", "result", "error"}` line
each. Replay fixtures map a request-content hash to the recorded result so
tests and offline runs never need the live process.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import threading
from typing import Any, Mapping, TextIO

import numpy as np

from .errors import ProviderUnavailable, ScorerUnavailable
from .classify import SectionLogits
from .models import ApiRecord


def request_hash(op: str, payload: Mapping[str, Any]) -> str:
    """Content hash shared with the sidecar's replay recorder."""
    canonical = json.dumps({"op": op, "payload": dict(payload)},
                           sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class SidecarClient:
    """Serialized request/response channel to one sidecar connection."""

    def __init__(self, reader: TextIO, writer: TextIO, close=None):
        self._reader = reader
        self._writer = writer
        self._close = close
        self._lock = threading.Lock()
        self._next_id = 0

    @classmethod
    def spawn(cls, argv: list[str]) -> "SidecarClient":
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                text=True, bufsize=1)

        def close():
            proc.stdin.close()
            proc.wait(timeout=10)

        return cls(proc.stdout, proc.stdin, close=close)

    @classmethod
    def connect(cls, host: str, port: int) -> "SidecarClient":
        import socket

        sock = socket.create_connection((host, port))
        reader = sock.makefile("r", encoding="utf-8")
        writer = sock.makefile("w", encoding="utf-8")
        return cls(reader, writer, close=sock.close)

    def request(self, op: str, payload: Mapping[str, Any]) -> Any:
        with self._lock:
            self._next_id += 1
            request_id = self._next_id
            line = json.dumps({"op": op, "payload": dict(payload), "id": request_id},
                              ensure_ascii=False)
            try:
                self._writer.write(line + "\n")
                self._writer.flush()
                raw = self._reader.readline()
            except (OSError, ValueError) as exc:
                raise ScorerUnavailable(f"sidecar connection failed: {exc}") from exc
        if not raw:
            raise ScorerUnavailable("sidecar closed the connection")
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ScorerUnavailable(f"sidecar sent a non-JSON line: {raw[:120]!r}") from exc
        if response.get("id") != request_id:
            raise ScorerUnavailable(
                f"response id {response.get('id')} does not match request {request_id}")
        if not response.get("ok"):
            raise ScorerUnavailable(f"sidecar error: {response.get('error')}")
        return response.get("result")

    def handshake(self) -> dict[str, Any]:
        result = self.request("handshake", {})
        dim = result.get("dim") if isinstance(result, dict) else None
        if not isinstance(dim, int) or dim <= 0:
            raise ScorerUnavailable(f"handshake reported invalid dim: {result!r}")
        return result

    def close(self) -> None:
        if self._close is not None:
            self._close()


def _as_logits(result: Any) -> SectionLogits:
    if not isinstance(result, list) or len(result) != 4:
        raise ScorerUnavailable(f"section result is not a 4-vector: {result!r}")
    return SectionLogits(tuple(float(v) for v in result))


def _as_probability(result: Any) -> float:
    try:
        c = float(result)
    except (TypeError, ValueError):
        raise ScorerUnavailable(f"context result is not a number: {result!r}") from None
    if not 0.0 <= c <= 1.0:
        raise ScorerUnavailable(f"context probability out of range: {c}")
    return c


class SidecarScorer:
    """Scorer backed by a live sidecar connection."""

    def __init__(self, client: SidecarClient):
        self.client = client
        info = client.handshake()
        self.name = f"sidecar:{info.get('model_name', 'unknown')}"
        self.deterministic = True

    def score_section(self, sentence_text: str, api: ApiRecord) -> SectionLogits:
        result = self.client.request(
            "section", {"sentence": sentence_text, "api": api.api_name})
        return _as_logits(result)

    def score_context(self, left_text: str, right_text: str) -> float:
        result = self.client.request(
            "context", {"left": left_text, "right": right_text})
        return _as_probability(result)


class SidecarEmbedder:
    """Embedding provider backed by a live sidecar connection."""

    def __init__(self, client: SidecarClient):
        self.client = client
        try:
            info = client.handshake()
        except ScorerUnavailable as exc:
            raise ProviderUnavailable(str(exc)) from exc
        self.dim = int(info["dim"])
        self.name = f"sidecar:{info.get('model_name', 'unknown')}"
        self.deterministic = True

    def embed(self, text: str) -> np.ndarray:
        try:
            result = self.client.request("embed", {"text": text})
        except ScorerUnavailable as exc:
            raise ProviderUnavailable(str(exc)) from exc
        vector = np.asarray(result, dtype=float)
        if vector.shape != (self.dim,):
            raise ProviderUnavailable(
                f"embed result has shape {vector.shape}, expected ({self.dim},)")
        return vector


def load_replay_fixture(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        fixture = json.load(fh)
    if not isinstance(fixture, dict):
        raise ScorerUnavailable(f"replay fixture must be a JSON object: {path}")
    return fixture


class ReplayScorer:
    """Scorer answering from a recorded request-hash fixture."""

    name = "replay"
    deterministic = True

    def __init__(self, fixture: str | Mapping[str, Any]):
        self.fixture = (load_replay_fixture(fixture)
                        if isinstance(fixture, str) else dict(fixture))

    def _lookup(self, op: str, payload: Mapping[str, Any]) -> Any:
        digest = request_hash(op, payload)
        if digest not in self.fixture:
            raise ScorerUnavailable(f"replay miss for {op}", request_hash=digest)
        return self.fixture[digest]

    def score_section(self, sentence_text: str, api: ApiRecord) -> SectionLogits:
        return _as_logits(self._lookup(
            "section", {"sentence": sentence_text, "api": api.api_name}))

    def score_context(self, left_text: str, right_text: str) -> float:
        return _as_probability(self._lookup(
            "context", {"left": left_text, "right": right_text}))


class ReplayEmbedder:
    """Embedding provider answering from a recorded request-hash fixture."""

    name = "replay"
    deterministic = True

    def __init__(self, fixture: str | Mapping[str, Any], dim: int | None = None):
        self.fixture = (load_replay_fixture(fixture)
                        if isinstance(fixture, str) else dict(fixture))
        if dim is None:
            handshake = self.fixture.get(request_hash("handshake", {}))
            if not (isinstance(handshake, dict)
                    and isinstance(handshake.get("dim"), int)):
                raise ProviderUnavailable(
                    "replay fixture has no handshake entry; pass dim explicitly")
            dim = handshake["dim"]
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        digest = request_hash("embed", {"text": text})
        if digest not in self.fixture:
            raise ProviderUnavailable(f"replay miss for embed [{digest}]")
        vector = np.asarray(self.fixture[digest], dtype=float)
        if vector.shape != (self.dim,):
            raise ProviderUnavailable(
                f"embed result has shape {vector.shape}, expected ({self.dim},)")
        return vector
